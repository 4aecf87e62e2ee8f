// Copyright 2026 The peftner Authors
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

#include "peftner/carbon.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "peftner/error.hpp"
#include "test_util.hpp"

namespace peftner::carbon {
namespace {

using testing::code_of;

TEST(Carbon, DeskWorkstationExample) {
  const auto r = estimate_carbon(0.4, 12, 242);
  EXPECT_NEAR(r.energy_kwh, 4.8, 1e-12);
  EXPECT_NEAR(r.kg_co2, 1.1616, 1e-12);
}

TEST(Carbon, UnitExample) {
  const auto r = estimate_carbon(1, 1, 1000);
  EXPECT_EQ(r.energy_kwh, 1.0);
  EXPECT_EQ(r.kg_co2, 1.0);
}

TEST(Carbon, ZeroHoursIsZero) {
  const auto r = estimate_carbon(0.4, 0, 242);
  EXPECT_EQ(r.energy_kwh, 0.0);
  EXPECT_EQ(r.kg_co2, 0.0);
}

TEST(Carbon, LinearInEachInput) {
  const auto base = estimate_carbon(0.3, 5, 200);
  EXPECT_NEAR(estimate_carbon(0.6, 5, 200).kg_co2, 2 * base.kg_co2, 1e-12);
  EXPECT_NEAR(estimate_carbon(0.3, 10, 200).kg_co2, 2 * base.kg_co2, 1e-12);
  EXPECT_NEAR(estimate_carbon(0.3, 5, 400).kg_co2, 2 * base.kg_co2, 1e-12);
}

TEST(Carbon, RejectsNegativeAndNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([] { estimate_carbon(-0.1, 1, 1); }), ErrorCode::NegativeInput);
  EXPECT_EQ(code_of([] { estimate_carbon(1, -1, 1); }), ErrorCode::NegativeInput);
  EXPECT_EQ(code_of([] { estimate_carbon(1, 1, -1); }), ErrorCode::NegativeInput);
  EXPECT_EQ(code_of([&] { estimate_carbon(nan, 1, 1); }), ErrorCode::NegativeInput);
  EXPECT_EQ(code_of([&] { estimate_carbon(1, inf, 1); }), ErrorCode::NegativeInput);
}

TEST(Carbon, KeyValues) {
  const auto kv = estimate_carbon(0.4, 12, 242).to_key_values();
  EXPECT_NE(kv.find("energy_kwh=4.8\n"), std::string::npos) << kv;
  EXPECT_NE(kv.find("kg_co2=1.1616\n"), std::string::npos) << kv;
}

}  // namespace
}  // namespace peftner::carbon
