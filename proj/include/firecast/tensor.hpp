#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace firecast {

// Dense row-major n-dimensional array of 64-bit reals. Values are finite by
// construction: any constructor that accepts data rejects NaN/Inf. Treated as
// an immutable value once built; mutation happens only through the raw data()
// pointer while an op assembles its own result.
class Tensor {
public:
    Tensor() = default;  // empty placeholder; every op rejects rank 0

    explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor full(std::vector<std::size_t> shape, double value);
    // Row-major 2-D convenience for tests and fixtures.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    // Bounds-checked element access; inner loops index data() directly.
    double& at(std::size_t i);
    double& at(std::size_t i, std::size_t j);
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    std::string shape_string() const;

private:
    std::size_t offset(const std::size_t* idx, std::size_t n) const;

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace firecast
