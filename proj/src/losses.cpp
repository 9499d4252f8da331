// Copyright 2026 The psfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "psfuse/losses.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "psfuse/core/errors.hpp"

namespace psfuse::losses {

using lightcodec::kClasses;
using json = nlohmann::json;

namespace {

// Cross-entropy of one 32-way head; adds scale * (softmax - onehot) to grad.
template <class Get, class Add>
double head_ce(Get logit, int target, double scale, Add add_grad) {
  if (target < 0 || target >= kClasses) throw DomainError("class target out of range");
  double mx = logit(0);
  for (int k = 1; k < kClasses; ++k) mx = std::max(mx, logit(k));
  double sum = 0.0;
  for (int k = 0; k < kClasses; ++k) sum += std::exp(logit(k) - mx);
  const double lse = mx + std::log(sum);
  for (int k = 0; k < kClasses; ++k) {
    const double p = std::exp(logit(k) - lse);
    add_grad(k, scale * (p - (k == target ? 1.0 : 0.0)));
  }
  return lse - logit(target);
}

void check_map(const NormalMap& n, const Mask& mask, const char* what) {
  if (n.height() != mask.height() || n.width() != mask.width()) {
    throw ShapeError(std::string(what) + " normal map does not match the mask size");
  }
}

double dot3(const std::array<float, 3>& a, const std::array<double, 3>& b) {
  return static_cast<double>(a[0]) * b[0] + static_cast<double>(a[1]) * b[1] + static_cast<double>(a[2]) * b[2];
}

}  // namespace

std::string LossReport::to_json() const {
  return json{{"total", total}, {"components", components}, {"batch_images", batch_images}, {"pixels", pixels}}
      .dump();
}

LossReport LossReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    LossReport r;
    r.total = j.at("total").get<double>();
    r.components = j.at("components").get<std::map<std::string, double>>();
    r.batch_images = j.value("batch_images", 0);
    r.pixels = j.value("pixels", 0L);
    return r;
  } catch (const json::exception& e) {
    throw IngestionError(std::string("malformed loss report: ") + e.what());
  }
}

std::vector<std::array<double, 3>> directions(const std::vector<LightSample>& lights) {
  std::vector<std::array<double, 3>> out;
  out.reserve(lights.size());
  for (const auto& l : lights) out.push_back(l.direction().array());
  return out;
}

double lighting_loss(const std::vector<lightcodec::LightLogits>& logits,
                     const std::vector<lightcodec::DiscreteLighting>& targets,
                     std::vector<lightcodec::LightLogits>* grad) {
  if (logits.size() != targets.size()) {
    throw ShapeError("lighting loss: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (logits.empty()) throw ShapeError("lighting loss: empty batch");
  const double scale = 1.0 / static_cast<double>(logits.size());
  if (grad) grad->assign(logits.size(), lightcodec::LightLogits{});
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& l = logits[i];
    const auto& t = targets[i];
    const std::array<const std::array<double, kClasses>*, 3> heads{&l.azimuth, &l.elevation, &l.intensity};
    const std::array<int, 3> tgt{t.azimuth_bin, t.elevation_bin, t.intensity_bin};
    for (int h = 0; h < 3; ++h) {
      std::array<double, kClasses>* g = nullptr;
      if (grad) {
        auto& gi = (*grad)[i];
        g = h == 0 ? &gi.azimuth : (h == 1 ? &gi.elevation : &gi.intensity);
      }
      total += head_ce([&](int k) { return (*heads[h])[k]; }, tgt[h], scale,
                       [&](int k, double v) {
                         if (g) (*g)[k] += v;
                       });
    }
  }
  return total * scale;
}

double normal_loss(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  check_map(pred, mask, "predicted");
  check_map(gt, mask, "ground-truth");
  const std::size_t count = mask.count();
  if (count == 0) throw DomainError("normal loss over an empty mask");
  double sum = 0.0;
  const std::size_t n = static_cast<std::size_t>(mask.height()) * mask.width();
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.inside(p)) continue;
    const auto a = pred.raw(p);
    const auto b = gt.raw(p);
    sum += 1.0 - dot3(a, {b[0], b[1], b[2]});
  }
  return sum / static_cast<double>(count);
}

double shading_loss(const NormalMap& gt_n, const std::vector<LightSample>& gt_l, const NormalMap& pred_n,
                    const std::vector<LightSample>& pred_l, const Mask& mask) {
  check_map(gt_n, mask, "ground-truth");
  check_map(pred_n, mask, "predicted");
  if (gt_l.size() != pred_l.size()) throw ShapeError("shading loss: light lists differ in length");
  if (gt_l.empty()) throw ShapeError("shading loss: no lights");
  const std::size_t count = mask.count();
  if (count == 0) throw DomainError("shading loss over an empty mask");
  const std::size_t n = static_cast<std::size_t>(mask.height()) * mask.width();
  double sum = 0.0;
  for (std::size_t m = 0; m < gt_l.size(); ++m) {
    const auto lg = gt_l[m].direction().array();
    const auto lp = pred_l[m].direction().array();
    for (std::size_t p = 0; p < n; ++p) {
      if (!mask.inside(p)) continue;
      const double d = dot3(gt_n.raw(p), lg) - dot3(pred_n.raw(p), lp);
      sum += d * d;
    }
  }
  return sum / (static_cast<double>(gt_l.size()) * static_cast<double>(count));
}

LossReport finetune_loss(double light1, double light2, double normal, double shading) {
  for (double v : {light1, light2, normal, shading}) {
    if (!std::isfinite(v)) throw DomainError("fine-tune loss component is not finite");
    if (v < 0.0) throw DomainError("fine-tune loss component is negative");
  }
  LossReport r;
  r.components = {{"light1", light1}, {"light2", light2}, {"normal", normal}, {"shading", shading}};
  r.total = light1 + normal + shading + light2;
  return r;
}

// ---------------------------------------------------------------------------

template <class T>
double lighting_loss(const Tensor<T>& logits, const std::vector<lightcodec::DiscreteLighting>& targets,
                     Tensor<T>* dlogits) {
  const int n = logits.n();
  if (static_cast<int>(targets.size()) != n || logits.sample_size() != 3 * kClasses) {
    throw ShapeError("lighting loss: logits " + logits.shape_string() + " vs " + std::to_string(targets.size()) +
                     " targets");
  }
  if (n == 0) throw ShapeError("lighting loss: empty batch");
  if (dlogits) *dlogits = Tensor<T>(n, 3 * kClasses, 1, 1);
  const double scale = 1.0 / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::array<int, 3> tgt{targets[i].azimuth_bin, targets[i].elevation_bin, targets[i].intensity_bin};
    for (int h = 0; h < 3; ++h) {
      const T* src = logits.sample(i) + h * kClasses;
      T* g = dlogits ? dlogits->sample(i) + h * kClasses : nullptr;
      total += head_ce([&](int k) { return static_cast<double>(src[k]); }, tgt[h], scale,
                       [&](int k, double v) {
                         if (g) g[k] = static_cast<T>(v);
                       });
    }
  }
  return total * scale;
}

template <class T>
double normal_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask, Tensor<T>* dpred) {
  if (!pred.same_shape(gt) || pred.c() != 3 || mask.n() != pred.n() || mask.c() != 1 || mask.h() != pred.h() ||
      mask.w() != pred.w()) {
    throw ShapeError("normal loss: shapes " + pred.shape_string() + ", " + gt.shape_string() + ", " +
                     mask.shape_string());
  }
  if (dpred) *dpred = Tensor<T>(pred.n(), 3, pred.h(), pred.w());
  const std::size_t hw = pred.plane_size();
  std::vector<double> count(pred.n(), 0.0);
  int valid = 0;
  for (int s = 0; s < pred.n(); ++s) {
    const T* m = mask.plane(s, 0);
    for (std::size_t p = 0; p < hw; ++p) count[s] += m[p];
    if (count[s] > 0) ++valid;
  }
  if (valid == 0) throw DomainError("normal loss over an empty mask");
  double total = 0.0;
  for (int s = 0; s < pred.n(); ++s) {
    if (count[s] <= 0) continue;
    const T* m = mask.plane(s, 0);
    double sum = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      if (m[p] == T(0)) continue;
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d += static_cast<double>(pred.plane(s, c)[p]) * gt.plane(s, c)[p];
      sum += static_cast<double>(m[p]) * (1.0 - d);
    }
    total += sum / count[s];
    if (dpred) {
      const double scale = 1.0 / (count[s] * valid);
      for (int c = 0; c < 3; ++c) {
        T* g = dpred->plane(s, c);
        const T* t = gt.plane(s, c);
        for (std::size_t p = 0; p < hw; ++p) g[p] = static_cast<T>(-scale * m[p] * t[p]);
      }
    }
  }
  return total / valid;
}

template <class T>
double shading_loss(const Tensor<T>& gt_n, const std::vector<std::array<double, 3>>& gt_l, const Tensor<T>& pred_n,
                    const std::vector<std::array<double, 3>>& pred_l, const Tensor<T>& mask, int set_size,
                    Tensor<T>* dpred_n, std::vector<std::array<double, 3>>* dpred_l) {
  const int sets = pred_n.n();
  if (!gt_n.same_shape(pred_n) || pred_n.c() != 3 || mask.n() != sets || mask.c() != 1 || set_size <= 0) {
    throw ShapeError("shading loss: mismatching tensor shapes");
  }
  const std::size_t lights = static_cast<std::size_t>(sets) * set_size;
  if (gt_l.size() != lights || pred_l.size() != lights) throw ShapeError("shading loss: light count mismatch");
  if (dpred_n) *dpred_n = Tensor<T>(sets, 3, pred_n.h(), pred_n.w());
  if (dpred_l) dpred_l->assign(lights, {0.0, 0.0, 0.0});
  const std::size_t hw = pred_n.plane_size();
  std::vector<double> count(sets, 0.0);
  int valid = 0;
  for (int s = 0; s < sets; ++s) {
    const T* m = mask.plane(s, 0);
    for (std::size_t p = 0; p < hw; ++p) count[s] += m[p];
    if (count[s] > 0) ++valid;
  }
  if (valid == 0) throw DomainError("shading loss over an empty mask");
  double total = 0.0;
  for (int s = 0; s < sets; ++s) {
    if (count[s] <= 0) continue;
    const T* m = mask.plane(s, 0);
    const double norm = 1.0 / (count[s] * set_size);
    const double gscale = 2.0 * norm / valid;
    double sum = 0.0;
    for (int k = 0; k < set_size; ++k) {
      const auto& lg = gt_l[s * set_size + k];
      const auto& lp = pred_l[s * set_size + k];
      for (std::size_t p = 0; p < hw; ++p) {
        if (m[p] == T(0)) continue;
        double a = 0.0, b = 0.0;
        for (int c = 0; c < 3; ++c) {
          a += static_cast<double>(gt_n.plane(s, c)[p]) * lg[c];
          b += static_cast<double>(pred_n.plane(s, c)[p]) * lp[c];
        }
        const double d = a - b;
        sum += static_cast<double>(m[p]) * d * d;
        const double g = -gscale * m[p] * d;
        if (dpred_n)
          for (int c = 0; c < 3; ++c) dpred_n->plane(s, c)[p] += static_cast<T>(g * lp[c]);
        if (dpred_l)
          for (int c = 0; c < 3; ++c) (*dpred_l)[s * set_size + k][c] += g * pred_n.plane(s, c)[p];
      }
    }
    total += sum * norm;
  }
  return total / valid;
}

#define PSFUSE_INSTANTIATE_LOSSES(T)                                                                              \
  template double lighting_loss(const Tensor<T>&, const std::vector<lightcodec::DiscreteLighting>&, Tensor<T>*); \
  template double normal_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                 \
  template double shading_loss(const Tensor<T>&, const std::vector<std::array<double, 3>>&, const Tensor<T>&,    \
                               const std::vector<std::array<double, 3>>&, const Tensor<T>&, int, Tensor<T>*,     \
                               std::vector<std::array<double, 3>>*);

PSFUSE_INSTANTIATE_LOSSES(float)
PSFUSE_INSTANTIATE_LOSSES(double)

#undef PSFUSE_INSTANTIATE_LOSSES

}  // namespace psfuse::losses
