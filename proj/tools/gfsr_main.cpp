#include "gfsr/cli.hpp"

int main(int argc, char** argv) { return gfsr::run(argc, argv); }
