#include "commands.hpp"

int main(int argc, char** argv) { return oodmine::cli::run(argc, argv); }
