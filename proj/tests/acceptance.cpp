#include <doctest.h>
// acceptance criteria suite -- filled in after unit tests pass
