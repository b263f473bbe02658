#ifndef LOSSBENCH_TENSOR_HPP
#define LOSSBENCH_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lossbench {

/// Dense row-major matrix of 64-bit floats. Scalars are 1x1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw std::invalid_argument("tensor: data/shape mismatch");
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c); }
  static Tensor ones(std::size_t r, std::size_t c) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), 1.0);
    return t;
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows_in) {
    Tensor t(rows_in.size(), rows_in.begin()->size());
    std::size_t i = 0;
    for (const auto& r : rows_in) {
      if (r.size() != t.cols) throw std::invalid_argument("tensor: ragged rows");
      std::size_t j = 0;
      for (double v : r) t(i, j++) = v;
      ++i;
    }
    return t;
  }

  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return rows == 1 && cols == 1; }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& at(std::size_t k) { return data[k]; }
  double at(std::size_t k) const { return data[k]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  EigenMap map() {
    return EigenMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstEigenMap map() const {
    return ConstEigenMap(data.data(), static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(cols));
  }
};

inline void require_shape(bool ok, const std::string& op, const Tensor& a, const Tensor& b) {
  if (!ok)
    throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " and " +
                                b.shape_str());
}

/// Glorot-uniform init scaled by fan-in/fan-out, deterministic per seed.
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Tensor t(fan_in, fan_out);
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace lossbench

#endif  // LOSSBENCH_TENSOR_HPP
