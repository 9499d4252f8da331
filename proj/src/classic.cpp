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

#include "psfuse/classic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace psfuse::classic {

namespace {

using Matrix = Eigen::MatrixXd;

Matrix light_matrix(const std::vector<LightSample>& lights, const std::vector<int>& rows) {
  Matrix l(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = lights[rows[i]];
    l(i, 0) = s.intensity() * s.direction().x();
    l(i, 1) = s.intensity() * s.direction().y();
    l(i, 2) = s.intensity() * s.direction().z();
  }
  return l;
}

Eigen::ColPivHouseholderQR<Matrix> factorize(const Matrix& l) {
  Eigen::ColPivHouseholderQR<Matrix> qr(l);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw DegenerateLightingError("light matrix has rank " + std::to_string(qr.rank()) + " < 3");
  return qr;
}

}  // namespace

LambertianSolution solve_lambertian(const ImageLightSet& set, const SolveOptions& options) {
  set.validate();
  if (!set.lights) throw DomainError("Lambertian solve requires known lights");
  const int m = set.size();
  if (m < 3) throw InsufficientObservationsError("Lambertian solve needs at least 3 images, got " + std::to_string(m));
  const auto& lights = *set.lights;

  const int h = set.height(), w = set.width(), ch = set.channels();
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  std::vector<int> all(m);
  std::iota(all.begin(), all.end(), 0);
  const Matrix l_all = light_matrix(lights, all);
  const auto qr_all = factorize(l_all);
  const bool reject = options.shadow_rejection && m > 4;
  const int drop = reject ? (m + 3) / 4 : 0;

  LambertianSolution sol;
  sol.channels = ch;
  sol.albedo.assign(pixels * ch, 0.0);
  sol.residual.assign(pixels, 0.0);
  sol.unrecovered.assign(pixels, 0);
  std::vector<float> xyz(pixels * 3, 0.0f);
  std::vector<std::uint8_t> recovered(pixels, 0);

  Matrix obs(m, ch);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (!set.mask.inside(p)) continue;
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < ch; ++c) obs(i, c) = set.images[i].values()[p * ch + c];

    Matrix g;
    double residual = 0.0;
    if (reject) {
      std::vector<int> order = all;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return obs.row(a).sum() < obs.row(b).sum(); });
      std::vector<int> keep(order.begin() + drop, order.end());
      std::sort(keep.begin(), keep.end());
      const Matrix l = light_matrix(lights, keep);
      Eigen::ColPivHouseholderQR<Matrix> qr(l);
      qr.setThreshold(1e-10);
      if (qr.rank() < 3) {
        sol.unrecovered[p] = 1;
        continue;
      }
      Matrix sub(static_cast<Eigen::Index>(keep.size()), ch);
      for (std::size_t i = 0; i < keep.size(); ++i) sub.row(i) = obs.row(keep[i]);
      g = qr.solve(sub);
      residual = (l * g - sub).norm();
    } else {
      g = qr_all.solve(obs);
      residual = (l_all * g - obs).norm();
    }

    const Eigen::Vector3d dir = g.rowwise().sum();
    if (dir.norm() < options.min_g_norm * ch) {
      sol.unrecovered[p] = 1;
      continue;
    }
    const Eigen::Vector3d n = dir.normalized();
    for (int c = 0; c < ch; ++c) sol.albedo[p * ch + c] = std::max(0.0, n.dot(g.col(c)));
    sol.residual[p] = residual;
    xyz[3 * p] = static_cast<float>(n.x());
    xyz[3 * p + 1] = static_cast<float>(n.y());
    xyz[3 * p + 2] = static_cast<float>(n.z());
    recovered[p] = 1;
  }
  sol.normals = NormalMap::from_vectors(Mask(h, w, std::move(recovered)), xyz);
  return sol;
}

}  // namespace psfuse::classic
