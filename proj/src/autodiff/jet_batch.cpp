#include "msm/autodiff/jet_batch.hpp"

#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "msm/errors.hpp"

namespace msm::ad {

namespace {

/// tanh through the vectorized exponential: 1 - 2 / (e^{2z} + 1). Saturates correctly
/// at both ends; absolute error stays at a few ulp of 1.
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayXXd& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

/// The jet buffers are large and short-lived; keep glibc from returning them to the
/// kernel after every batch, which otherwise dominates the run time with page faults.
bool configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}

}  // namespace

int JetLayout::find_pair(int p, int q) const {
  if (p > q) std::swap(p, q);
  for (std::size_t k = 0; k < hess_pairs.size(); ++k) {
    if (hess_pairs[k].first == p && hess_pairs[k].second == q) return static_cast<int>(k);
  }
  return -1;
}

JetLayout JetLayout::values(int inputs) {
  JetLayout l;
  l.inputs = inputs;
  l.with_gradient = false;
  return l;
}

JetLayout JetLayout::first_order(int inputs) {
  JetLayout l;
  l.inputs = inputs;
  return l;
}

JetLayout JetLayout::diagonal(int inputs, int count) {
  JetLayout l = first_order(inputs);
  for (int i = 0; i < count; ++i) l.hess_pairs.emplace_back(i, i);
  return l;
}

JetLayout JetLayout::full(int inputs) {
  JetLayout l = first_order(inputs);
  for (int p = 0; p < inputs; ++p) {
    for (int q = p; q < inputs; ++q) l.hess_pairs.emplace_back(p, q);
  }
  return l;
}

Matrix forward_jets(const DenseNetwork& net, const Matrix& points, const JetLayout& layout,
                    JetCache* cache) {
  const int n = layout.inputs;
  if (n != net.input_dim() || points.rows() != n) {
    throw ContractError("jet input dimension " + std::to_string(points.rows()) +
                        " does not match network input dimension " +
                        std::to_string(net.input_dim()));
  }
  if (!layout.with_gradient && !layout.hess_pairs.empty()) {
    throw ContractError("second derivatives require gradient channels");
  }
  static const bool allocator_ready = configure_allocator();
  (void)allocator_ready;
  const Eigen::Index P = points.cols();
  const int C = layout.channels();
  const int G = layout.with_gradient ? n : 0;

  if (cache != nullptr) {
    cache->layout = layout;
    cache->points = P;
    cache->inputs.clear();
    cache->pre.clear();
    cache->act.clear();
  }

  Matrix a = Matrix::Zero(n, C * P);
  a.leftCols(P) = points;
  for (int i = 0; i < G; ++i) a.block(i, (1 + i) * P, 1, P).setOnes();

  const int L = net.num_layers();
  for (int l = 0; l < L; ++l) {
    Matrix z(net.weight(l).rows(), C * P);
    z.noalias() = net.weight(l) * a;
    z.leftCols(P).colwise() += net.bias(l);

    if (l == L - 1) {
      Matrix out(C, P);
      for (int c = 0; c < C; ++c) out.row(c) = z.block(0, c * P, 1, P);
      if (cache != nullptr) cache->inputs.push_back(std::move(a));
      return out;
    }

    const Eigen::Index width = z.rows();
    Matrix t = fast_tanh(z.leftCols(P).array()).matrix();
    Matrix next(width, C * P);
    next.leftCols(P) = t;
    // Per column, per unit: s = tanh', s2 = tanh''. Columns are contiguous in memory.
    Eigen::VectorXd s(width), s2(width);
    for (Eigen::Index j = 0; j < P; ++j) {
      const double* tj = t.col(j).data();
      for (Eigen::Index r = 0; r < width; ++r) {
        s[r] = 1.0 - tj[r] * tj[r];
        s2[r] = -2.0 * tj[r] * s[r];
      }
      for (int i = 0; i < G; ++i) {
        const Eigen::Index c = (layout.grad_channel(i)) * P + j;
        const double* zc = z.col(c).data();
        double* nc = next.col(c).data();
        for (Eigen::Index r = 0; r < width; ++r) nc[r] = s[r] * zc[r];
      }
      for (std::size_t k = 0; k < layout.hess_pairs.size(); ++k) {
        const auto [p, q] = layout.hess_pairs[k];
        const Eigen::Index h = layout.hess_channel(static_cast<int>(k)) * P + j;
        const double* zp = z.col(layout.grad_channel(p) * P + j).data();
        const double* zq = z.col(layout.grad_channel(q) * P + j).data();
        const double* zh = z.col(h).data();
        double* nh = next.col(h).data();
        for (Eigen::Index r = 0; r < width; ++r) nh[r] = s2[r] * zp[r] * zq[r] + s[r] * zh[r];
      }
    }
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(std::move(z));
      cache->act.push_back(std::move(t));
    }
    a = std::move(next);
  }
  return {};  // unreachable: L >= 1
}

void backward_jets(const DenseNetwork& net, const JetCache& cache, const Matrix& adjoint,
                   NetworkGradient& grad) {
  const JetLayout& layout = cache.layout;
  const Eigen::Index P = cache.points;
  const int C = layout.channels();
  const int G = layout.with_gradient ? layout.inputs : 0;
  if (adjoint.rows() != C || adjoint.cols() != P) {
    throw ContractError("adjoint shape does not match the cached jet batch");
  }
  const int L = net.num_layers();

  Matrix zbar(1, C * P);
  for (int c = 0; c < C; ++c) zbar.block(0, c * P, 1, P) = adjoint.row(c);

  Matrix abar;
  for (int l = L - 1; l >= 0; --l) {
    if (l < L - 1) {
      const Matrix& t = cache.act[l];
      const Matrix& z = cache.pre[l];
      const Eigen::Index width = z.rows();
      zbar.resize(width, C * P);
      Eigen::VectorXd s(width), s2(width), s3(width), sbar(width), s2bar(width);
      for (Eigen::Index j = 0; j < P; ++j) {
        const double* tj = t.col(j).data();
        for (Eigen::Index r = 0; r < width; ++r) {
          const double tt = tj[r] * tj[r];
          s[r] = 1.0 - tt;
          s2[r] = -2.0 * tj[r] * s[r];
          s3[r] = -2.0 * s[r] * s[r] + 4.0 * tt * s[r];
        }
        sbar.setZero();
        s2bar.setZero();
        for (int i = 0; i < G; ++i) {
          const Eigen::Index c = layout.grad_channel(i) * P + j;
          const double* ab = abar.col(c).data();
          const double* zc = z.col(c).data();
          double* zb = zbar.col(c).data();
          for (Eigen::Index r = 0; r < width; ++r) {
            zb[r] = s[r] * ab[r];
            sbar[r] += zc[r] * ab[r];
          }
        }
        for (std::size_t k = 0; k < layout.hess_pairs.size(); ++k) {
          const auto [p, q] = layout.hess_pairs[k];
          const Eigen::Index h = layout.hess_channel(static_cast<int>(k)) * P + j;
          const Eigen::Index cp = layout.grad_channel(p) * P + j;
          const Eigen::Index cq = layout.grad_channel(q) * P + j;
          const double* ab = abar.col(h).data();
          const double* zp = z.col(cp).data();
          const double* zq = z.col(cq).data();
          const double* zh = z.col(h).data();
          double* zbh = zbar.col(h).data();
          double* zbp = zbar.col(cp).data();
          double* zbq = zbar.col(cq).data();
          for (Eigen::Index r = 0; r < width; ++r) {
            zbh[r] = s[r] * ab[r];
            sbar[r] += zh[r] * ab[r];
            s2bar[r] += zp[r] * zq[r] * ab[r];
            const double w = s2[r] * ab[r];
            zbp[r] += w * zq[r];
            zbq[r] += w * zp[r];
          }
        }
        const double* av = abar.col(j).data();
        double* zv = zbar.col(j).data();
        for (Eigen::Index r = 0; r < width; ++r) {
          zv[r] = s[r] * av[r] + s2[r] * sbar[r] + s3[r] * s2bar[r];
        }
      }
    }
    grad.weights[l].noalias() += zbar * cache.inputs[l].transpose();
    grad.biases[l] += zbar.leftCols(P).rowwise().sum();
    if (l > 0) abar.noalias() = net.weight(l).transpose() * zbar;
  }
}

Vector forward_values(const DenseNetwork& net, const Matrix& points) {
  Matrix out = forward_jets(net, points, JetLayout::values(net.input_dim()));
  return out.row(0).transpose();
}

}  // namespace msm::ad
