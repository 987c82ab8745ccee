#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "fdc/threads.hpp"

int main(int argc, char** argv) {
    fdc::init_threads();
    return doctest::Context(argc, argv).run();
}
