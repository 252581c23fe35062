#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmbt {

using Scalar = double;
using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense row-major tensor of doubles. Value type, no views.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}
    Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, Scalar v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2-d helpers (most of the model lives in n x d matrices)
    int64_t rows() const { return ndim() == 2 ? shape_[0] : (ndim() == 1 ? 1 : -1); }
    int64_t cols() const { return ndim() == 2 ? shape_[1] : (ndim() == 1 ? shape_[0] : -1); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    Scalar& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    Scalar at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    Scalar& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    Scalar at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    Scalar item() const {
        if (numel() != 1) throw std::logic_error("item() on tensor with " + std::to_string(numel()) + " elements");
        return data_[0];
    }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::vector<Scalar> data_;
};

// Deterministic RNG: splitmix-seeded xoshiro-free, plain mt19937_64 with
// hand-rolled draws so streams are stable across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    Scalar uniform() { return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53; }
    Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    Scalar normal(Scalar mu = 0.0, Scalar sd = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mu + sd * spare_;
        }
        Scalar u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        Scalar r = std::sqrt(-2.0 * std::log(u1));
        Scalar a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mu + sd * r * std::cos(a);
    }

    uint64_t fork(uint64_t stream) {
        // derive an independent seed for a named substream
        uint64_t z = s_ + 0x632be59bd9b4e019ull * (stream + 1);
        z = (z ^ (z >> 29)) * 0xbf58476d1ce4e5b9ull;
        return z ^ (z >> 32);
    }

    uint64_t raw_state() const { return s_; }

private:
    uint64_t s_;
    bool have_spare_ = false;
    Scalar spare_ = 0.0;
};

inline Tensor randn(Shape shape, Rng& rng, Scalar sd = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, sd);
    return t;
}

}  // namespace xmbt
