#include "retag/cli/cli.hpp"

int main(int argc, char** argv) { return retag::cli_main(argc, argv); }
