#pragma once

// Stage quantities built from explicit operator matrices.

#include "mvms/tomo/upsample.hpp"
#include "oracles/tomo_oracle.hpp"

namespace oracle {

/// The seven quantities from explicit matrices.
struct DenseChain {
    Array2D x_u, e_u, e_f, e_k, e_s, e_d, e_j;
};

inline DenseChain dense_chain(const mvms::tomo::ScanGeometry& g, const mvms::tomo::ViewSubset& s, const Array2D& x, const Array2D& y) {
    const mvms::tomo::ViewSubset full = mvms::tomo::full_subset(g);
    const Array2D Ps = mvms::tomo::dense_matrix_oracle(g, s);
    const Array2D Pf = mvms::tomo::dense_matrix_oracle(g, full);
    const Array2D Fs = fbp_matrix(g, s);
    const Array2D Ff = fbp_matrix(g, full);
    const mvms::tomo::ViewUpsampler up(g, s);
    const Array2D Iu = matrix_of([&](const Array2D& a) { return up.apply(a); }, s.q1(), g.n_det);
    const std::size_t n = g.m1, q = s.q1(), nv = g.n_views(), nd = g.n_det;
    const Array2D I = identity(g.pixels());
    const Array2D Ns = I - matmul(Fs, Ps); // I - Ps^T Ps
    const Array2D Nf = I - matmul(Ff, Pf);

    DenseChain d;
    d.e_s = apply(Fs, y - apply(Ps, x, q, nd), n, n);
    d.e_d = apply(Ns, x, n, n);
    const Array2D r_hat = x + d.e_s - d.e_d;
    d.e_j = apply(Ns, r_hat, n, n);
    d.e_f = apply(Nf, x, n, n);
    d.e_k = apply(Nf, r_hat, n, n);
    d.x_u = apply(Ff, apply(Iu, y, nv, nd), n, n);
    d.e_u = apply(Ff, apply(Iu, apply(Ps, x, q, nd), nv, nd) - apply(Pf, x, nv, nd), n, n);
    return d;
}

} // namespace oracle
