#include "gridstate/cli.hpp"

int main(int argc, char** argv) { return gridstate::run_cli(argc, argv); }
