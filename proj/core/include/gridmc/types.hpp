#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

namespace gridmc {

using Index = Eigen::Index;
using cplx = std::complex<double>;

using RMatrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using CVector = Eigen::VectorXcd;

using Seed = std::uint64_t;

}  // namespace gridmc
