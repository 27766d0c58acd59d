#include "streamhl/cli.hpp"

int main(int argc, char** argv) { return streamhl::cli_main(argc, argv); }
