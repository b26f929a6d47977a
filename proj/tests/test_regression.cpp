#include <doctest.h>
#include "ldfr/regression.hpp"
