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

#pragma once

// Internal: one table of function pointers per compiled ISA.

#include <cstddef>

#include "psfuse/simd/kernels.hpp"

namespace psfuse::simd::detail {

template <class T>
using GemmFn = void (*)(bool, bool, int, int, int, const T*, int, const T*, int, T, T*, int);
template <class T>
using LeakyFwdFn = void (*)(const T*, T, T*, std::size_t);
template <class T>
using LeakyBwdFn = void (*)(const T*, const T*, T, T*, std::size_t);
using AdamFn = void (*)(float*, const float*, float*, float*, const AdamStep&, std::size_t);

struct KernelTable {
  GemmFn<float> sgemm;
  GemmFn<double> dgemm;
  LeakyFwdFn<float> leaky_fwd_f;
  LeakyFwdFn<double> leaky_fwd_d;
  LeakyBwdFn<float> leaky_bwd_f;
  LeakyBwdFn<double> leaky_bwd_d;
  AdamFn adam;
};

const KernelTable& scalar_table();
#if defined(PSFUSE_HAVE_X86_KERNELS)
const KernelTable& avx2_table();
const KernelTable& avx512_table();
#endif

}  // namespace psfuse::simd::detail
