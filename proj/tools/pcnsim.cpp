#include "pcn/cli.hpp"

int main(int argc, char** argv) { return pcn::cli::main(argc, argv); }
