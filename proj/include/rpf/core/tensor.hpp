#pragma once

#include <cassert>
#include <cstdint>
#include <cmath>
#include <string>
#include <vector>

namespace rpf::core {

/// Dense row-major tensor of doubles. Ranks used throughout the project:
/// 2 (H,W) image planes, 3 (C,H,W) multi-channel images, 4 (N,C,H,W) batches.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
    Tensor(std::vector<int> shape, double fill)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }

    bool empty() const { return data_.empty(); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (H,W)
    double& at(int y, int x) { return data_[idx2(y, x)]; }
    const double& at(int y, int x) const { return data_[idx2(y, x)]; }
    // (C,H,W)
    double& at(int c, int y, int x) { return data_[idx3(c, y, x)]; }
    const double& at(int c, int y, int x) const { return data_[idx3(c, y, x)]; }
    // (N,C,H,W)
    double& at(int n, int c, int y, int x) { return data_[idx4(n, c, y, x)]; }
    const double& at(int n, int c, int y, int x) const { return data_[idx4(n, c, y, x)]; }

    int height() const { return shape_[shape_.size() - 2]; }
    int width() const { return shape_.back(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<int> shape) const {
        assert(count(shape) == numel());
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + ")";
    }

private:
    size_t idx2(int y, int x) const {
        assert(rank() == 2);
        return static_cast<size_t>(y) * shape_[1] + x;
    }
    size_t idx3(int c, int y, int x) const {
        assert(rank() == 3);
        return (static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x;
    }
    size_t idx4(int n, int c, int y, int x) const {
        assert(rank() == 4);
        return ((static_cast<size_t>(n) * shape_[1] + c) * static_cast<size_t>(shape_[2]) + y) * shape_[3] + x;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace rpf::core
