#include <doctest.h>
#include "ldfr/smoothing.hpp"
