#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

/// Named slice of a flat parameter vector.
struct LayoutEntry {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const LayoutEntry&) const = default;
};

/// Ordered, contiguous segmentation of a flat parameter vector. Layouts are
/// immutable and shared; two ParamVectors may combine arithmetically only if
/// their layouts are identical.
class Layout {
  public:
    explicit Layout(std::vector<LayoutEntry> entries) : entries_(std::move(entries)) {
        std::size_t off = 0;
        for (const auto& e : entries_) {
            if (e.offset != off)
                throw LayoutError("Layout: non-contiguous entry '" + e.name + "'");
            off += e.length;
        }
        total_ = off;
    }

    const std::vector<LayoutEntry>& entries() const { return entries_; }
    std::size_t total_length() const { return total_; }

    const LayoutEntry& find(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw LayoutError("Layout: no entry named '" + name + "'");
    }

    bool operator==(const Layout& o) const {
        return total_ == o.total_ && entries_ == o.entries_;
    }

  private:
    std::vector<LayoutEntry> entries_;
    std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

inline bool same_layout(const LayoutPtr& a, const LayoutPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    return *a == *b;
}

/// Flat ordered sequence of trainable scalars with a named layout; the unit
/// of aggregation, distance, and optimizer state. Elementwise arithmetic runs
/// in layout order, so sums over a fixed operand order are bit-reproducible.
class ParamVector {
  public:
    ParamVector() = default;
    ParamVector(LayoutPtr layout, std::vector<double> data)
        : layout_(std::move(layout)), data_(std::move(data)) {
        if (layout_ && layout_->total_length() != data_.size())
            throw LayoutError("ParamVector: data length does not match layout");
    }

    static ParamVector zeros(LayoutPtr layout) {
        std::vector<double> d(layout->total_length(), 0.0);
        return ParamVector(std::move(layout), std::move(d));
    }

    const LayoutPtr& layout() const { return layout_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }
    std::size_t size() const { return data_.size(); }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    void check_same_layout(const ParamVector& o, const char* op) const {
        if (!same_layout(layout_, o.layout_))
            throw LayoutError(std::string("ParamVector: layout mismatch in ") + op);
    }

    ParamVector& operator+=(const ParamVector& o) {
        check_same_layout(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    ParamVector& operator-=(const ParamVector& o) {
        check_same_layout(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    ParamVector& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    /// this += a * x
    ParamVector& axpy(double a, const ParamVector& x) {
        check_same_layout(x, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
        return *this;
    }

    friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
    friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
    friend ParamVector operator*(double s, ParamVector a) { return a *= s; }

  private:
    LayoutPtr layout_;
    std::vector<double> data_;
};

/// Sum of squared componentwise differences.
inline double euclid_sq(const ParamVector& a, const ParamVector& b) {
    a.check_same_layout(b, "euclid_sq");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

/// 1 - cos(angle between a and b), in [0, 2]. Both inputs must be nonzero.
inline double cosine_dist(const ParamVector& a, const ParamVector& b) {
    a.check_same_layout(b, "cosine_dist");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw UndefinedDistanceError("cosine_dist: zero-norm input");
    // sqrt(na*nb) keeps cosine(a,a) exactly 1: sqrt(x*x) == x in IEEE double.
    return 1.0 - dot / std::sqrt(na * nb);
}

}  // namespace fedsim
