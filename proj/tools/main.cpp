#include "tsmarket/cli.hpp"

int main(int argc, char** argv) { return tsmarket::cli::main_entry(argc, argv); }
