#include <cstdio>
int main() { std::puts("[FAIL] criterion 8: not implemented"); return 1; }
