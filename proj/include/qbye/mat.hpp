// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qbye {

// Dense row-major matrix. Small enough on purpose: the whole model is
// 81x81-ish, so plain loops over contiguous storage are all we need.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    T* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    Mat transposed() const {
        Mat t(cols, rows);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                t.at(c, r) = at(r, c);
        return t;
    }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> m(rows, cols);
        for (size_t i = 0; i < data.size(); ++i) m.data[i] = static_cast<U>(data[i]);
        return m;
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using MatF = Mat<float>;

// y = W x + b, W is (out x in), x has in entries, y gets out entries.
template <typename T>
inline void matvec_add(const Mat<T>& w, const T* x, const std::vector<T>& b, T* y) {
    for (int r = 0; r < w.rows; ++r) {
        const T* wr = w.row(r);
        T acc = b.empty() ? T(0) : b[static_cast<size_t>(r)];
        for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// y = W^T x (accumulating transpose product used by backprop)
template <typename T>
inline void matvec_transpose(const Mat<T>& w, const T* x, T* y) {
    for (int c = 0; c < w.cols; ++c) y[c] = T(0);
    for (int r = 0; r < w.rows; ++r) {
        const T* wr = w.row(r);
        const T xr = x[r];
        for (int c = 0; c < w.cols; ++c) y[c] += wr[c] * xr;
    }
}

// grad_w += dy * x^T  (outer product accumulate)
template <typename T>
inline void outer_accumulate(Mat<T>& grad_w, const T* dy, const T* x) {
    for (int r = 0; r < grad_w.rows; ++r) {
        T* gr = grad_w.row(r);
        const T d = dy[r];
        for (int c = 0; c < grad_w.cols; ++c) gr[c] += d * x[c];
    }
}

} // namespace qbye
