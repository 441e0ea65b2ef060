#include <vector>

#include "planagent/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return planagent::cli::dispatch(std::move(args));
}
