#include "octrecon/cli.hpp"

int main(int argc, char** argv) { return octrecon::cli::run(argc, argv); }
