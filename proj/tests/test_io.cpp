#include <doctest.h>
#include "ldfr/io.hpp"
#include "ldfr/harness.hpp"
