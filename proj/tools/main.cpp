#include "dassim/cli.hpp"

int main(int argc, char** argv) { return dassim::cli::main(argc, argv); }
