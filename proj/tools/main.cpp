#include "retrieval_cli.hpp"

int main(int argc, char** argv) { return retrieval::cli::run(argc, argv); }
