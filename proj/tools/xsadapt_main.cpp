#include "xsadapt/cli.hpp"

int main(int argc, char** argv) { return xsa::run_cli(argc, argv); }
