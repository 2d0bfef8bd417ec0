// placeholder
#include "cuspwalk/util.hpp"
