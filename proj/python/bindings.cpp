#include <pybind11/pybind11.h>

PYBIND11_MODULE(flowlab, m) { m.doc() = "flow-map training lab"; }
