#include <iostream>

int main() {
  std::cerr << "s2w CLI: not wired up yet\n";
  return 1;
}
