#include "coevnet/cli.hpp"

int main(int argc, char** argv) { return coevnet::cli_main(argc, argv); }
