#include "dcno/cli.hpp"

int main(int argc, char** argv) { return dcno::cli_main(argc, argv); }
