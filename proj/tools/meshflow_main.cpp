#include "meshflow/cli.hpp"

int main(int argc, char** argv) { return meshflow::run_cli(argc, argv); }
