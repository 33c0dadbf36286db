#pragma once

// Reverse-mode autodiff over dense row-major matrices. One Tape per forward
// pass; ops append nodes and closures that accumulate parent gradients.
// Templated on the scalar so training runs in float while gradient checks
// run the identical graph in double.

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "mtnet/common.hpp"

namespace mtnet {

template <typename S>
class Tape {
 public:
  using Id = int;

  Id constant(Mat<S> v) { return push(std::move(v), false, {}); }

  Id param(Mat<S> v) { return push(std::move(v), true, {}); }

  const Mat<S>& val(Id i) const { return nodes_[size_t(i)].val; }
  const Mat<S>& grad(Id i) const { return nodes_[size_t(i)].grad; }
  bool needs_grad(Id i) const { return nodes_[size_t(i)].ng; }
  size_t size() const { return nodes_.size(); }

  Id matmul(Id a, Id b) {
    Id o = push(val(a) * val(b), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a).noalias() += g(o) * val(b).transpose();
      if (ng(b)) g(b).noalias() += val(a).transpose() * g(o);
    });
    return o;
  }

  Id add(Id a, Id b) {
    return push(val(a) + val(b), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a) += g(o);
      if (ng(b)) g(b) += g(o);
    });
  }

  Id sub(Id a, Id b) {
    return push(val(a) - val(b), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a) += g(o);
      if (ng(b)) g(b) -= g(o);
    });
  }

  Id cmul(Id a, Id b) {
    return push(val(a).cwiseProduct(val(b)), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a).array() += g(o).array() * val(b).array();
      if (ng(b)) g(b).array() += g(o).array() * val(a).array();
    });
  }

  Id cdiv(Id a, Id b) {
    return push(val(a).cwiseQuotient(val(b)), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a).array() += g(o).array() / val(b).array();
      if (ng(b)) g(b).array() -= g(o).array() * val(o).array() / val(b).array();
    });
  }

  Id scale(Id a, S k) {
    return push(val(a) * k, ng(a), [this, a, k](Id o) {
      if (ng(a)) g(a) += g(o) * k;
    });
  }

  Id add_scalar(Id a, S k) {
    return push(val(a).array() + k, ng(a), [this, a](Id o) {
      if (ng(a)) g(a) += g(o);
    });
  }

  /// Broadcast-add a 1xC row (bias) to every row of a.
  Id add_rowvec(Id a, Id r) {
    return push(val(a).rowwise() + val(r).row(0), ng(a) || ng(r), [this, a, r](Id o) {
      if (ng(a)) g(a) += g(o);
      if (ng(r)) g(r).row(0) += g(o).colwise().sum();
    });
  }

  /// Multiply row i of a by c(i,0).
  Id mul_colvec(Id a, Id c) {
    return push(val(a).array().colwise() * val(c).col(0).array(), ng(a) || ng(c),
                [this, a, c](Id o) {
                  if (ng(a)) g(a).array() += g(o).array().colwise() * val(c).col(0).array();
                  if (ng(c))
                    g(c).col(0).array() +=
                        (g(o).array() * val(a).array()).rowwise().sum();
                });
  }

  /// Subtract c(i,0) from every entry of row i.
  Id sub_colvec(Id a, Id c) {
    return push(val(a).array().colwise() - val(c).col(0).array(), ng(a) || ng(c),
                [this, a, c](Id o) {
                  if (ng(a)) g(a) += g(o);
                  if (ng(c)) g(c).col(0) -= g(o).rowwise().sum();
                });
  }

  /// Broadcast-multiply by a 1x1 node.
  Id bcast_mul(Id a, Id s) {
    return push(val(a) * val(s)(0, 0), ng(a) || ng(s), [this, a, s](Id o) {
      if (ng(a)) g(a) += g(o) * val(s)(0, 0);
      if (ng(s)) g(s)(0, 0) += (g(o).array() * val(a).array()).sum();
    });
  }

  Id tanh_(Id a) {
    return push(val(a).array().tanh(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o).array() * (S(1) - val(o).array().square());
    });
  }

  Id sigmoid_(Id a) {
    return push((S(1) / (S(1) + (-val(a).array()).exp())), ng(a), [this, a](Id o) {
      if (ng(a))
        g(a).array() += g(o).array() * val(o).array() * (S(1) - val(o).array());
    });
  }

  Id exp_(Id a) {
    return push(val(a).array().exp(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o).array() * val(o).array();
    });
  }

  Id log_(Id a) {
    return push(val(a).array().log(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o).array() / val(a).array();
    });
  }

  Id softplus_(Id a) {
    Mat<S> v = val(a);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const S x = v.data()[i];
      v.data()[i] = x > S(20) ? x : (x < S(-20) ? std::exp(x) : std::log1p(std::exp(x)));
    }
    return push(std::move(v), ng(a), [this, a](Id o) {
      if (ng(a))
        g(a).array() += g(o).array() / (S(1) + (-val(a).array()).exp());
    });
  }

  Id square_(Id a) {
    return push(val(a).array().square(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o).array() * S(2) * val(a).array();
    });
  }

  Id sqrt_(Id a) {
    return push(val(a).array().sqrt(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o).array() / (S(2) * val(o).array());
    });
  }

  Id abs_(Id a) {
    return push(val(a).array().abs(), ng(a), [this, a](Id o) {
      if (ng(a))
        g(a).array() += g(o).array() * val(a).array().sign();
    });
  }

  Id clamp_(Id a, S lo, S hi) {
    return push(val(a).array().max(lo).min(hi), ng(a), [this, a, lo, hi](Id o) {
      if (ng(a))
        g(a).array() +=
            g(o).array() * ((val(a).array() > lo) && (val(a).array() < hi)).template cast<S>();
    });
  }

  Id transpose(Id a) {
    return push(val(a).transpose(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a) += g(o).transpose();
    });
  }

  Id sum(Id a) {
    Mat<S> v(1, 1);
    v(0, 0) = val(a).sum();
    return push(std::move(v), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o)(0, 0);
    });
  }

  Id mean(Id a) {
    Mat<S> v(1, 1);
    v(0, 0) = val(a).mean();
    return push(std::move(v), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array() += g(o)(0, 0) / S(val(a).size());
    });
  }

  Id rowwise_sum(Id a) {
    return push(val(a).rowwise().sum(), ng(a), [this, a](Id o) {
      if (ng(a)) g(a).array().colwise() += g(o).col(0).array();
    });
  }

  /// out.row(k) = a.row(idx[k]); indices may repeat. Backward scatter-adds.
  Id gather_rows(Id a, std::vector<int> idx) {
    Mat<S> v(Eigen::Index(idx.size()), val(a).cols());
    for (size_t k = 0; k < idx.size(); ++k) v.row(Eigen::Index(k)) = val(a).row(idx[k]);
    return push(std::move(v), ng(a), [this, a, idx = std::move(idx)](Id o) {
      if (!ng(a)) return;
      for (size_t k = 0; k < idx.size(); ++k)
        g(a).row(idx[k]) += g(o).row(Eigen::Index(k));
    });
  }

  /// Reshape [R, C] -> [R/k, k*C] by concatenating k consecutive rows.
  Id group_rows(Id a, int k) {
    const Eigen::Index R = val(a).rows(), C = val(a).cols();
    if (R % k != 0) throw std::logic_error("group_rows: row count not divisible");
    Mat<S> v(R / k, k * C);
    std::memcpy(v.data(), val(a).data(), size_t(R * C) * sizeof(S));
    return push(std::move(v), ng(a), [this, a, R, C](Id o) {
      if (!ng(a)) return;
      Eigen::Map<const Mat<S>> go(g(o).data(), R, C);
      g(a) += go;
    });
  }

  /// Reshape [R, k*C] -> [R*k, C], inverse of group_rows.
  Id ungroup_rows(Id a, int k) {
    const Eigen::Index R = val(a).rows(), C = val(a).cols() / k;
    Mat<S> v(R * k, C);
    std::memcpy(v.data(), val(a).data(), size_t(R * k * C) * sizeof(S));
    return push(std::move(v), ng(a), [this, a, R, C, k](Id o) {
      if (!ng(a)) return;
      Eigen::Map<const Mat<S>> go(g(o).data(), R, C * k);
      g(a) += go;
    });
  }

  /// Column-wise max over row segments [off[s], off[s+1]). Grad flows to the
  /// first argmax row of each segment column.
  Id segment_max(Id a, std::vector<int> off) {
    check_segments(off, val(a).rows());
    const Eigen::Index C = val(a).cols();
    const int n = int(off.size()) - 1;
    Mat<S> v(n, C);
    std::vector<int> arg(size_t(n) * size_t(C));
    for (int s = 0; s < n; ++s)
      for (Eigen::Index c = 0; c < C; ++c) {
        S best = -std::numeric_limits<S>::infinity();
        int bi = off[size_t(s)];
        for (int r = off[size_t(s)]; r < off[size_t(s) + 1]; ++r)
          if (val(a)(r, c) > best) best = val(a)(r, c), bi = r;
        v(s, c) = best;
        arg[size_t(s) * size_t(C) + size_t(c)] = bi;
      }
    return push(std::move(v), ng(a), [this, a, C, n, arg = std::move(arg)](Id o) {
      if (!ng(a)) return;
      for (int s = 0; s < n; ++s)
        for (Eigen::Index c = 0; c < C; ++c)
          g(a)(arg[size_t(s) * size_t(C) + size_t(c)], c) += g(o)(s, c);
    });
  }

  Id segment_mean(Id a, std::vector<int> off) {
    check_segments(off, val(a).rows());
    const Eigen::Index C = val(a).cols();
    const int n = int(off.size()) - 1;
    Mat<S> v = Mat<S>::Zero(n, C);
    for (int s = 0; s < n; ++s) {
      for (int r = off[size_t(s)]; r < off[size_t(s) + 1]; ++r) v.row(s) += val(a).row(r);
      v.row(s) /= S(off[size_t(s) + 1] - off[size_t(s)]);
    }
    return push(std::move(v), ng(a), [this, a, n, off = std::move(off)](Id o) {
      if (!ng(a)) return;
      for (int s = 0; s < n; ++s) {
        const S inv = S(1) / S(off[size_t(s) + 1] - off[size_t(s)]);
        for (int r = off[size_t(s)]; r < off[size_t(s) + 1]; ++r)
          g(a).row(r) += g(o).row(s) * inv;
      }
    });
  }

  Id concat_cols(Id a, Id b) {
    Mat<S> v(val(a).rows(), val(a).cols() + val(b).cols());
    v.leftCols(val(a).cols()) = val(a);
    v.rightCols(val(b).cols()) = val(b);
    return push(std::move(v), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a) += g(o).leftCols(val(a).cols());
      if (ng(b)) g(b) += g(o).rightCols(val(b).cols());
    });
  }

  Id concat_rows(Id a, Id b) {
    Mat<S> v(val(a).rows() + val(b).rows(), val(a).cols());
    v.topRows(val(a).rows()) = val(a);
    v.bottomRows(val(b).rows()) = val(b);
    return push(std::move(v), ng(a) || ng(b), [this, a, b](Id o) {
      if (ng(a)) g(a) += g(o).topRows(val(a).rows());
      if (ng(b)) g(b) += g(o).bottomRows(val(b).rows());
    });
  }

  Id slice_cols(Id a, int start, int n) {
    return push(val(a).middleCols(start, n), ng(a), [this, a, start, n](Id o) {
      if (ng(a)) g(a).middleCols(start, n) += g(o);
    });
  }

  Id slice_rows(Id a, int start, int n) {
    return push(val(a).middleRows(start, n), ng(a), [this, a, start, n](Id o) {
      if (ng(a)) g(a).middleRows(start, n) += g(o);
    });
  }

  /// Value pass-through that blocks the gradient.
  Id detach(Id a) { return push(val(a), false, {}); }

  /// Row maxima as a constant [R,1] (for stable logsumexp shifts).
  Id rowwise_max_detached(Id a) {
    Mat<S> v = val(a).rowwise().maxCoeff();
    return push(std::move(v), false, {});
  }

  /// Numerically stable row-wise log(sum(exp(a))) as [R,1].
  Id logsumexp_rows(Id a) {
    const Id m = rowwise_max_detached(a);
    const Id shifted = sub_colvec(a, m);
    const Id lse = log_(rowwise_sum(exp_(shifted)));
    return add(lse, m);
  }

  /// Accumulate d(root)/d(node) into every grad-requiring node. root must be 1x1.
  void backward(Id root) {
    if (val(root).size() != 1) throw std::logic_error("backward root must be scalar");
    for (auto& n : nodes_)
      if (n.ng) n.grad.setZero(n.val.rows(), n.val.cols());
    auto& r = nodes_[size_t(root)];
    r.grad.setZero(1, 1);
    r.grad(0, 0) = S(1);
    for (Id i = Id(nodes_.size()) - 1; i >= 0; --i) {
      auto& n = nodes_[size_t(i)];
      if (n.ng && n.back) n.back(i);
    }
  }

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

 private:
  struct Node {
    Mat<S> val;
    Mat<S> grad;
    bool ng = false;
    std::function<void(Id)> back;
  };

  bool ng(Id i) const { return nodes_[size_t(i)].ng; }
  Mat<S>& g(Id i) { return nodes_[size_t(i)].grad; }

  static void check_segments(const std::vector<int>& off, Eigen::Index rows) {
    if (off.size() < 2 || off.front() != 0 || off.back() != int(rows))
      throw std::logic_error("segment offsets must span all rows");
    for (size_t i = 1; i < off.size(); ++i)
      if (off[i] <= off[i - 1]) throw std::logic_error("empty or unsorted segment");
  }

  Id push(Mat<S> v, bool needs, std::function<void(Id)> back) {
    if (!v.allFinite())
      throw std::runtime_error("non-finite value produced at tape node " +
                               std::to_string(nodes_.size()));
    nodes_.push_back(Node{std::move(v), {}, needs, std::move(back)});
    return Id(nodes_.size()) - 1;
  }

  std::deque<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace mtnet
