#include "app.hpp"

int main(int argc, char** argv) { return mpdsa::cli::run_cli(argc, argv); }
