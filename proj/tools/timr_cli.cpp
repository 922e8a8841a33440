#include <cstdio>

int main() {
  std::puts("timr: placeholder");
  return 0;
}
