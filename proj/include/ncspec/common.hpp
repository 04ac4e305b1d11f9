#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace ncspec {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;

inline constexpr cplx kI{0.0, 1.0};

}  // namespace ncspec
