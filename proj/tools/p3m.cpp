#include "p3m/cli/cli.hpp"

int main(int argc, char** argv) { return p3m::cli::run(argc, argv); }
