#include <cstdio>
int main() { std::puts("[FAIL] criterion 10: not implemented"); return 1; }
