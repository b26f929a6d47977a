#include <doctest.h>
#include "ldfr/lfpca.hpp"
