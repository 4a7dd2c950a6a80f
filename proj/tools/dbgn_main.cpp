#include "dbgn/cli.hpp"

int main(int argc, char** argv) { return dbgn::run_cli(argc, argv); }
