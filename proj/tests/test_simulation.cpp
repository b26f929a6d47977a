#include <doctest.h>
#include "ldfr/simulation.hpp"
