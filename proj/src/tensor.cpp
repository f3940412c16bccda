#include "firecast/tensor.hpp"

#include <cmath>
#include <sstream>

#include "firecast/errors.hpp"

namespace firecast {

namespace {
std::size_t checked_volume(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor shape must be non-empty");
    }
    std::size_t volume = 1;
    for (const std::size_t dim : shape) {
        if (dim == 0) {
            throw DimensionError("tensor dimensions must be positive, got " +
                                 shape_string(shape));
        }
        volume *= dim;
    }
    return volume;
}
}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_volume(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_volume(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + firecast::shape_string(shape_));
    }
    for (const double v : data_) {
        if (!std::isfinite(v)) {
            throw ArgumentError("tensor values must be finite");
        }
    }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    if (!std::isfinite(value)) {
        throw ArgumentError("tensor values must be finite");
    }
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    if (r == 0) {
        throw DimensionError("matrix literal must have at least one row");
    }
    const std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("matrix literal rows must have equal length");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) +
                             " out of range for shape " + firecast::shape_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::offset(const std::size_t* idx, std::size_t n) const {
    if (n != shape_.size()) {
        throw DimensionError("expected " + std::to_string(shape_.size()) +
                             " indices for shape " + firecast::shape_string(shape_));
    }
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < n; ++axis) {
        if (idx[axis] >= shape_[axis]) {
            throw DimensionError("index out of bounds for shape " +
                                 firecast::shape_string(shape_));
        }
        flat = flat * shape_[axis] + idx[axis];
    }
    return flat;
}

double& Tensor::at(std::size_t i) {
    const std::size_t idx[] = {i};
    return data_[offset(idx, 1)];
}
double& Tensor::at(std::size_t i, std::size_t j) {
    const std::size_t idx[] = {i, j};
    return data_[offset(idx, 2)];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t idx[] = {i, j, k};
    return data_[offset(idx, 3)];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    const std::size_t idx[] = {i, j, k, l};
    return data_[offset(idx, 4)];
}
double Tensor::at(std::size_t i) const { return const_cast<Tensor*>(this)->at(i); }
double Tensor::at(std::size_t i, std::size_t j) const {
    return const_cast<Tensor*>(this)->at(i, j);
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return const_cast<Tensor*>(this)->at(i, j, k);
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return const_cast<Tensor*>(this)->at(i, j, k, l);
}

std::string Tensor::shape_string() const { return firecast::shape_string(shape_); }

}  // namespace firecast
