#include <string>
#include <vector>

#include "negmine/cli.hpp"

int main(int argc, char** argv) {
  return negmine::run_cli(std::vector<std::string>(argv, argv + argc));
}
