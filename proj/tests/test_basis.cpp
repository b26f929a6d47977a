#include <doctest.h>
#include "ldfr/basis.hpp"
