#include "awcol/kernels.hpp"

#include <cstddef>

#include "awcol/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace awcol::kernels {
namespace {

bool go_parallel(double work) {
#ifdef _OPENMP
    return work >= kParallelWork && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
    (void)work;
    return false;
#endif
}

void check_affine(const Matrix& x, const Matrix& w, std::span<const double> bias) {
    if (x.cols() != w.cols()) {
        throw ShapeError("affine: input " + x.shape_str() + " vs weight " + w.shape_str());
    }
    if (bias.size() != w.rows()) throw ShapeError("affine: bias length mismatch");
}

// Row kernels shared by the serial and parallel paths.
inline void affine_row(const Matrix& x, const Matrix& w, std::span<const double> bias,
                       std::size_t b, Matrix& out) {
    auto xr = x.row(b);
    for (std::size_t o = 0; o < w.rows(); ++o) {
        auto wr = w.row(o);
        double acc = bias[o];
        for (std::size_t i = 0; i < xr.size(); ++i) acc += xr[i] * wr[i];
        out(b, o) = acc;
    }
}

inline void weight_grad_row(const Matrix& dy, const Matrix& x, std::size_t o, Matrix& out) {
    auto dst = out.row(o);
    for (std::size_t b = 0; b < dy.rows(); ++b) {
        const double g = dy(b, o);
        auto xr = x.row(b);
        for (std::size_t i = 0; i < xr.size(); ++i) dst[i] += g * xr[i];
    }
}

inline void input_grad_row(const Matrix& dy, const Matrix& w, std::size_t b, Matrix& out) {
    auto dst = out.row(b);
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const double g = dy(b, o);
        auto wr = w.row(o);
        for (std::size_t i = 0; i < wr.size(); ++i) dst[i] += g * wr[i];
    }
}

inline void sq_dist_row(const Matrix& a, const Matrix& c, std::size_t b, Matrix& out) {
    auto ar = a.row(b);
    for (std::size_t j = 0; j < c.rows(); ++j) {
        auto cr = c.row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < ar.size(); ++k) {
            const double d = ar[k] - cr[k];
            acc += d * d;
        }
        out(b, j) = acc;
    }
}

}  // namespace

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> bias) {
    check_affine(x, w, bias);
    Matrix out(x.rows(), w.rows());
    const auto n = static_cast<std::ptrdiff_t>(x.rows());
    const double work = double(x.rows()) * double(w.rows()) * double(w.cols());
#pragma omp parallel for schedule(static) if (go_parallel(work))
    for (std::ptrdiff_t b = 0; b < n; ++b) affine_row(x, w, bias, std::size_t(b), out);
    return out;
}

Matrix weight_grad(const Matrix& dy, const Matrix& x) {
    if (dy.rows() != x.rows()) throw ShapeError("weight_grad: batch mismatch");
    Matrix out(dy.cols(), x.cols());
    const auto n = static_cast<std::ptrdiff_t>(dy.cols());
    const double work = double(dy.rows()) * double(dy.cols()) * double(x.cols());
#pragma omp parallel for schedule(static) if (go_parallel(work))
    for (std::ptrdiff_t o = 0; o < n; ++o) weight_grad_row(dy, x, std::size_t(o), out);
    return out;
}

Matrix input_grad(const Matrix& dy, const Matrix& w) {
    if (dy.cols() != w.rows()) throw ShapeError("input_grad: width mismatch");
    Matrix out(dy.rows(), w.cols());
    const auto n = static_cast<std::ptrdiff_t>(dy.rows());
    const double work = double(dy.rows()) * double(w.rows()) * double(w.cols());
#pragma omp parallel for schedule(static) if (go_parallel(work))
    for (std::ptrdiff_t b = 0; b < n; ++b) input_grad_row(dy, w, std::size_t(b), out);
    return out;
}

Matrix sq_distances(const Matrix& a, const Matrix& c) {
    if (a.cols() != c.cols()) throw ShapeError("sq_distances: dim mismatch");
    Matrix out(a.rows(), c.rows());
    const auto n = static_cast<std::ptrdiff_t>(a.rows());
    const double work = double(a.rows()) * double(c.rows()) * double(c.cols());
#pragma omp parallel for schedule(static) if (go_parallel(work))
    for (std::ptrdiff_t b = 0; b < n; ++b) sq_dist_row(a, c, std::size_t(b), out);
    return out;
}

namespace serial {

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> bias) {
    check_affine(x, w, bias);
    Matrix out(x.rows(), w.rows());
    for (std::size_t b = 0; b < x.rows(); ++b) {
        for (std::size_t o = 0; o < w.rows(); ++o) {
            double acc = bias[o];
            for (std::size_t i = 0; i < x.cols(); ++i) acc += x(b, i) * w(o, i);
            out(b, o) = acc;
        }
    }
    return out;
}

Matrix weight_grad(const Matrix& dy, const Matrix& x) {
    if (dy.rows() != x.rows()) throw ShapeError("weight_grad: batch mismatch");
    Matrix out(dy.cols(), x.cols());
    for (std::size_t o = 0; o < dy.cols(); ++o)
        for (std::size_t b = 0; b < dy.rows(); ++b)
            for (std::size_t i = 0; i < x.cols(); ++i) out(o, i) += dy(b, o) * x(b, i);
    return out;
}

Matrix input_grad(const Matrix& dy, const Matrix& w) {
    if (dy.cols() != w.rows()) throw ShapeError("input_grad: width mismatch");
    Matrix out(dy.rows(), w.cols());
    for (std::size_t b = 0; b < dy.rows(); ++b)
        for (std::size_t o = 0; o < w.rows(); ++o)
            for (std::size_t i = 0; i < w.cols(); ++i) out(b, i) += dy(b, o) * w(o, i);
    return out;
}

Matrix sq_distances(const Matrix& a, const Matrix& c) {
    if (a.cols() != c.cols()) throw ShapeError("sq_distances: dim mismatch");
    Matrix out(a.rows(), c.rows());
    for (std::size_t b = 0; b < a.rows(); ++b) {
        for (std::size_t j = 0; j < c.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                const double d = a(b, k) - c(j, k);
                acc += d * d;
            }
            out(b, j) = acc;
        }
    }
    return out;
}

}  // namespace serial
}  // namespace awcol::kernels
