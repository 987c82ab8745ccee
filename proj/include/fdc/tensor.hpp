#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdc {

/// 64-byte-aligned allocator. Keeping every tensor buffer on the same
/// alignment pins Eigen's packet/scalar split, so elementwise transcendentals
/// and reductions are bitwise reproducible across allocations and runs.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(64)); }
    template <class U>
    bool operator==(const AlignedAlloc<U>&) const {
        return true;
    }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor dim must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

/// Dense row-major tensor of arbitrary rank. Model tensors are NCHW.
template <class S>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(Shape shape, S fill = S(0))
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}
    TensorT(Shape shape, AlignedVec<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }
    static TensorT full(Shape shape, S v) { return TensorT(std::move(shape), v); }

    bool empty() const { return data_.empty(); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    AlignedVec<S>& storage() { return data_; }
    const AlignedVec<S>& storage() const { return data_; }

    S& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // NCHW accessors
    S& at4(int n, int c, int y, int x) {
        return data_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    const S& at4(int n, int c, int y, int x) const {
        return const_cast<TensorT*>(this)->at4(n, c, y, x);
    }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    template <class T2>
    TensorT<T2> cast() const {
        AlignedVec<T2> d(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<T2>(data_[i]);
        return TensorT<T2>(shape_, std::move(d));
    }

private:
    Shape shape_;
    AlignedVec<S> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace fdc
