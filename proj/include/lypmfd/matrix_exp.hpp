#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lypmfd/errors.hpp"

namespace lypmfd {

// e^{tM} by scaling-and-squaring with a Pade core (Eigen's MatrixFunctions).
inline Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& M, double t) {
    if (M.rows() != M.cols()) throw DimensionError("matrix_exp: matrix must be square");
    if (M.rows() == 0) return M;
    if (M.rows() == 1) {
        Eigen::MatrixXd E(1, 1);
        E(0, 0) = std::exp(t * M(0, 0));
        if (!std::isfinite(E(0, 0)))
            throw NumericError("matrix_exp overflow: e^{tM} exceeds the representable range (t = " +
                               std::to_string(t) + ")");
        return E;
    }
    Eigen::MatrixXd E = (t * M).exp();
    if (!E.allFinite())
        throw NumericError("matrix_exp overflow: entries of e^{tM} exceed the representable range (t = " +
                           std::to_string(t) + ")");
    return E;
}

}  // namespace lypmfd
