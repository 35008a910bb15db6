#include "runner.hpp"

int main(int argc, char** argv) { return paec::cli::run(argc, argv); }
