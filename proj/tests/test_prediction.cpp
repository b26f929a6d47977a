#include <doctest.h>
#include "ldfr/prediction.hpp"
