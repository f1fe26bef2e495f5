/*
 * Copyright 2026 The fedtangle Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fedtangle/dag.hpp"
#include "fedtangle/error.hpp"
#include "fedtangle/rng.hpp"

namespace fedtangle {
namespace {

Transaction make_tx(std::uint64_t p0, std::uint64_t p1, std::uint32_t issuer,
                    double acc, double own_w, std::uint64_t ts) {
  Transaction tx;
  tx.parents[0] = p0;
  tx.parents[1] = p1;
  tx.issuer = issuer;
  tx.payload_digest = 0x5eed0000 + ts;
  tx.dataset_size = 100;
  tx.slots = 1;
  tx.acc = acc;
  tx.own_w = own_w;
  tx.timestamp = ts;
  tx.id = transaction_id(tx);
  return tx;
}

// Exact landing distribution of the weighted walk from `node`: recursive
// expansion of the per-step softmax, the oracle the Monte Carlo walks are
// measured against.
std::map<std::uint64_t, double> chain_law(const DagState& dag,
                                          std::uint64_t node) {
  const std::vector<std::uint64_t>& next = dag.approvers(node);
  if (next.empty()) return {{node, 1.0}};
  std::vector<double> cw(next.size());
  for (std::size_t i = 0; i < next.size(); ++i) {
    cw[i] = dag.cumulative_weight_of(next[i]);
  }
  const std::vector<double> probs =
      transition_probabilities(dag.cumulative_weight_of(node), cw);
  std::map<std::uint64_t, double> out;
  for (std::size_t i = 0; i < next.size(); ++i) {
    for (const auto& [tip, p] : chain_law(dag, next[i])) {
      out[tip] += probs[i] * p;
    }
  }
  return out;
}

void expect_walk_matches_chain_law(const DagState& dag, std::uint64_t seed,
                                   std::size_t n_walks = 100000,
                                   double tol = 0.02) {
  const std::map<std::uint64_t, double> exact =
      chain_law(dag, dag.genesis_id());
  RngStream rng(seed);
  std::map<std::uint64_t, std::size_t> counts;
  const WalkParams wp;
  for (std::size_t i = 0; i < n_walks; ++i) {
    ++counts[dag.walk_to_tip(dag.genesis_id(), wp, rng)];
  }
  double total_prob = 0.0;
  for (const auto& [tip, p] : exact) {
    const double freq =
        static_cast<double>(counts[tip]) / static_cast<double>(n_walks);
    EXPECT_NEAR(freq, p, tol) << "tip " << id_hex(tip);
    total_prob += p;
  }
  EXPECT_NEAR(total_prob, 1.0, 1e-9);
}

TEST(OwnWeight, HandDerivedFixture) {
  EXPECT_NEAR(own_weight(100, 0.5, 100, 300, 1, 0.9), 0.3375, 1e-12);
}

TEST(OwnWeight, ZeroAccuracyZeroWeight) {
  EXPECT_DOUBLE_EQ(own_weight(100, 0.5, 100, 300, 1, 0.0), 0.0);
}

TEST(OwnWeight, SingleNodeOwningAllData) {
  EXPECT_DOUBLE_EQ(own_weight(500, 0.0, 0, 500, 1, 1.0), 1.0);
}

TEST(OwnWeight, HomogeneousInDatasetSizes) {
  const double base = own_weight(100, 0.5, 100, 300, 1, 0.9);
  for (double lambda : {2.0, 7.0, 0.5}) {
    EXPECT_NEAR(own_weight(100 * lambda, 0.5, 100 * lambda, 300 * lambda, 1,
                           0.9),
                base, 1e-12);
  }
}

TEST(OwnWeight, ClampsToUnitInterval) {
  // Five training slots push the raw product above 1.
  EXPECT_DOUBLE_EQ(own_weight(500, 0.0, 0, 500, 5, 1.0), 1.0);
}

TEST(OwnWeight, ZeroDenominatorRejected) {
  try {
    own_weight(0, 0.5, 0, 0, 1, 0.9);
    FAIL() << "expected DegenerateWeight";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::degenerate_weight);
  }
}

TEST(CumulativeWeight, HandDerivedFixture) {
  EXPECT_NEAR(cumulative_weight(0.4, {{0.9, 0.5}}), 0.65, 1e-12);
}

TEST(CumulativeWeight, NoApproversReturnsOwnWeight) {
  EXPECT_DOUBLE_EQ(cumulative_weight(0.4, {}), 0.4);
}

TEST(CumulativeWeight, MatchedAccuracyContributesNothing) {
  EXPECT_DOUBLE_EQ(cumulative_weight(0.4, {{0.4, 0.7}}), 0.4);
}

TEST(CumulativeWeight, ClampKeepsCwAboveOwnWeight) {
  EXPECT_DOUBLE_EQ(cumulative_weight(0.8, {{0.1, 0.9}}, true), 0.8);
  EXPECT_NEAR(cumulative_weight(0.8, {{0.1, 0.9}}, false), 0.17, 1e-12);
}

TEST(TransitionProbabilities, SingleCandidateIsCertain) {
  const std::vector<double> p = transition_probabilities(0.3, {0.7});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
}

TEST(TransitionProbabilities, EqualWeightsSplitEvenly) {
  const std::vector<double> p = transition_probabilities(0.3, {0.5, 0.5});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(TransitionProbabilities, UnitGapHandValue) {
  const std::vector<double> p = transition_probabilities(0.0, {1.0, 0.0});
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1.0), 1e-12);
  EXPECT_NEAR(p[1], 1.0 / (e + 1.0), 1e-12);
}

TEST(TransitionProbabilities, SumsToOneAndShiftInvariant) {
  RngStream rng(91);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> cw(4);
    for (auto& v : cw) v = rng.next_double() * 3.0;
    const std::vector<double> base = transition_probabilities(0.0, cw);
    double sum = 0.0;
    for (double v : base) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);

    std::vector<double> shifted = cw;
    for (auto& v : shifted) v += 17.25;
    const std::vector<double> moved = transition_probabilities(5.0, shifted);
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_NEAR(base[i], moved[i], 1e-12);
    }
  }
}

TEST(TransitionProbabilities, EmptyCandidateSetRejected) {
  try {
    transition_probabilities(0.5, {});
    FAIL() << "expected NoSuccessors";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::no_successors);
  }
}

TEST(Attach, GenesisLeavesTipSetAfterFirstChild) {
  DagState dag(0xabc, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  EXPECT_EQ(dag.tips().count(g), 1u);
  dag.attach_transaction(make_tx(g, g, 1, 0.8, 0.4, 1), {});
  EXPECT_EQ(dag.tips().count(g), 0u);
  EXPECT_EQ(dag.tips().size(), 1u);
}

TEST(Attach, ChainKeepsOnlyTheLastTip) {
  DagState dag(0xabc, 0.5, 2.0);
  const Transaction a = make_tx(dag.genesis_id(), dag.genesis_id(), 1, 0.8,
                                0.4, 1);
  dag.attach_transaction(a, {});
  const Transaction b = make_tx(a.id, a.id, 2, 0.7, 0.3, 2);
  dag.attach_transaction(b, {});
  const Transaction c = make_tx(b.id, b.id, 3, 0.9, 0.5, 3);
  dag.attach_transaction(c, {});
  EXPECT_EQ(dag.size(), 4u);
  ASSERT_EQ(dag.tips().size(), 1u);
  EXPECT_EQ(*dag.tips().begin(), c.id);
}

TEST(Attach, InsertionOrderIsTopological) {
  DagState dag(0xabc, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.8, 0.4, 1);
  dag.attach_transaction(a, {});
  const Transaction b = make_tx(g, a.id, 2, 0.7, 0.3, 2);
  dag.attach_transaction(b, {});
  const Transaction c = make_tx(a.id, b.id, 3, 0.9, 0.5, 3);
  dag.attach_transaction(c, {});
  const std::vector<std::uint64_t>& order = dag.order();
  auto index_of = [&](std::uint64_t id) {
    return std::find(order.begin(), order.end(), id) - order.begin();
  };
  for (std::uint64_t id : order) {
    const Transaction& tx = dag.get(id);
    for (std::uint64_t parent : tx.parents) {
      if (parent == 0) continue;
      EXPECT_LT(index_of(parent), index_of(id));
    }
  }
}

TEST(Attach, OrphanParentRejected) {
  DagState dag(0xabc, 0.5, 2.0);
  const Transaction orphan = make_tx(0xdeadbeef, dag.genesis_id(), 1, 0.8,
                                     0.4, 1);
  try {
    dag.attach_transaction(orphan, {});
    FAIL() << "expected OrphanParent";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::orphan_parent);
  }
}

TEST(Attach, DuplicateIdRejected) {
  DagState dag(0xabc, 0.5, 2.0);
  const Transaction a = make_tx(dag.genesis_id(), dag.genesis_id(), 1, 0.8,
                                0.4, 1);
  dag.attach_transaction(a, {});
  try {
    dag.attach_transaction(a, {});
    FAIL() << "expected DuplicateTransaction";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::duplicate_transaction);
  }
}

TEST(Attach, ParentAccuracyIsRevalidated) {
  DagState dag(0xabc, 0.5, 2.0);  // default tolerance 0.05
  const std::uint64_t g = dag.genesis_id();
  Transaction a = make_tx(g, g, 1, 0.8, 0.4, 1);
  dag.attach_transaction(a, {});

  // Validator reproduces every claim except a's, which it measures 0.08 low.
  auto validator = [&](const Transaction& tx) {
    return tx.id == a.id ? tx.acc - 0.08 : tx.acc;
  };
  const Transaction ok = make_tx(g, g, 2, 0.7, 0.3, 2);
  EXPECT_NO_THROW(dag.attach_transaction(ok, validator));

  const Transaction child_of_a = make_tx(a.id, a.id, 3, 0.9, 0.5, 3);
  try {
    dag.attach_transaction(child_of_a, validator);
    FAIL() << "expected ValidationFailed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::validation_failed);
  }

  // Within tolerance the same claim passes.
  auto near_enough = [&](const Transaction& tx) { return tx.acc - 0.04; };
  EXPECT_NO_THROW(dag.attach_transaction(child_of_a, near_enough));
}

TEST(Confirm, TinyThresholdConfirmsEverythingWithWeight) {
  DagState dag(0xabc, 0.5, 1e-9);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.8, 0.4, 1);
  dag.attach_transaction(a, {});
  const std::vector<std::uint64_t> confirmed = dag.confirm_transactions();
  EXPECT_EQ(confirmed.size(), 2u);
}

TEST(Confirm, FreshDagWithHighThresholdConfirmsNothing) {
  DagState dag(0xabc, 0.5, 2.0);
  EXPECT_TRUE(dag.confirm_transactions().empty());
}

TEST(Confirm, ThresholdSelectsTheHandComputedSubset) {
  // Genesis (W=1) gets one approver with acc 0.9, so CW(g) = 1 (clamped,
  // since 0.9 - 1.0 < 0). A's approvers B and C lift CW(A) to
  // 0.4 + ((0.9-0.4)*0.45 + (0.6-0.4)*0.25)/2 = 0.5375. B, C stay at W.
  DagState dag(0xabc, 0.5, 0.5);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.9, 0.4, 1);
  dag.attach_transaction(a, {});
  const Transaction b = make_tx(a.id, a.id, 2, 0.9, 0.45, 2);
  dag.attach_transaction(b, {});
  const Transaction c = make_tx(a.id, a.id, 3, 0.6, 0.25, 3);
  dag.attach_transaction(c, {});

  EXPECT_NEAR(dag.cumulative_weight_of(a.id), 0.5375, 1e-12);
  const std::vector<std::uint64_t> confirmed = dag.confirm_transactions();
  // theta = 0.5: genesis (CW 1) and A (CW 0.5375) qualify; B and C do not.
  EXPECT_EQ(confirmed.size(), 2u);
  EXPECT_TRUE(dag.confirmed().count(g));
  EXPECT_TRUE(dag.confirmed().count(a.id));
}

TEST(Confirm, ConfirmationLatches) {
  DagState dag(0xabc, 0.5, 0.6);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.9, 0.4, 1);
  dag.attach_transaction(a, {});
  const Transaction b = make_tx(a.id, a.id, 2, 0.9, 0.5, 2);
  dag.attach_transaction(b, {});
  // CW(A) = 0.4 + (0.9-0.4)*0.5 = 0.65 >= 0.6.
  dag.confirm_transactions();
  ASSERT_TRUE(dag.confirmed().count(a.id));

  // A second approver whose accuracy equals W(A) halves the mean bonus:
  // CW(A) drops to 0.4 + 0.25/2 = 0.525 < theta. The confirmation stays.
  const Transaction c = make_tx(a.id, a.id, 3, 0.4, 0.5, 3);
  dag.attach_transaction(c, {});
  EXPECT_LT(dag.cumulative_weight_of(a.id), 0.6);
  dag.confirm_transactions();
  EXPECT_TRUE(dag.confirmed().count(a.id));
}

TEST(TipSelect, GenesisOnlyReturnsGenesisTwice) {
  DagState dag(0xabc, 0.5, 2.0);
  RngStream rng(5);
  const auto [t1, t2] = dag.tip_select(WalkParams{}, rng);
  EXPECT_EQ(t1, dag.genesis_id());
  EXPECT_EQ(t2, dag.genesis_id());
}

TEST(TipSelect, TwoTipsComeBackDistinct) {
  DagState dag(0xabc, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  dag.attach_transaction(make_tx(g, g, 1, 0.8, 0.4, 1), {});
  dag.attach_transaction(make_tx(g, g, 2, 0.8, 0.4, 2), {});
  RngStream rng(6);
  const auto [t1, t2] = dag.tip_select(WalkParams{}, rng);
  EXPECT_NE(t1, t2);
  EXPECT_TRUE(dag.tips().count(t1));
  EXPECT_TRUE(dag.tips().count(t2));
}

TEST(TipSelect, DeterministicUnderSeed) {
  DagState dag(0xabc, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.8, 0.4, 1);
  dag.attach_transaction(a, {});
  dag.attach_transaction(make_tx(g, a.id, 2, 0.7, 0.3, 2), {});
  dag.attach_transaction(make_tx(a.id, a.id, 3, 0.9, 0.5, 3), {});
  RngStream r1(7);
  RngStream r2(7);
  EXPECT_EQ(dag.tip_select(WalkParams{}, r1),
            dag.tip_select(WalkParams{}, r2));
}

TEST(Walk, TimesOutWhenStepBudgetIsTooSmall) {
  DagState dag(0xabc, 0.5, 2.0);
  std::uint64_t prev = dag.genesis_id();
  for (std::uint64_t ts = 1; ts <= 4; ++ts) {
    const Transaction tx = make_tx(prev, prev, 1, 0.8, 0.4, ts);
    dag.attach_transaction(tx, {});
    prev = tx.id;
  }
  RngStream rng(8);
  WalkParams wp;
  wp.max_steps = 1;
  try {
    dag.walk_to_tip(dag.genesis_id(), wp, rng);
    FAIL() << "expected WalkTimeout";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::walk_timeout);
  }
}

// Fixture 1: five-transaction diamond with asymmetric weights.
DagState diamond_fixture() {
  DagState dag(0x11, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.9, 0.5, 1);
  dag.attach_transaction(a, {});
  const Transaction b = make_tx(g, g, 2, 0.6, 0.2, 2);
  dag.attach_transaction(b, {});
  dag.attach_transaction(make_tx(a.id, b.id, 3, 0.8, 0.45, 3), {});
  dag.attach_transaction(make_tx(a.id, b.id, 4, 0.7, 0.3, 4), {});
  return dag;
}

// Fixture 2: one branch point with equal cumulative weights.
DagState equal_branch_fixture() {
  DagState dag(0x22, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  dag.attach_transaction(make_tx(g, g, 1, 0.8, 0.4, 1), {});
  dag.attach_transaction(make_tx(g, g, 2, 0.8, 0.4, 2), {});
  return dag;
}

// Fixture 3: eight transactions, three tips, uneven branching.
DagState irregular_fixture() {
  DagState dag(0x33, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.9, 0.5, 1);
  dag.attach_transaction(a, {});
  const Transaction b = make_tx(g, g, 2, 0.7, 0.3, 2);
  dag.attach_transaction(b, {});
  const Transaction c = make_tx(a.id, b.id, 3, 0.8, 0.4, 3);
  dag.attach_transaction(c, {});
  const Transaction d = make_tx(a.id, a.id, 4, 0.6, 0.2, 4);
  dag.attach_transaction(d, {});
  dag.attach_transaction(make_tx(b.id, c.id, 5, 0.85, 0.45, 5), {});
  dag.attach_transaction(make_tx(c.id, d.id, 6, 0.75, 0.35, 6), {});
  dag.attach_transaction(make_tx(d.id, d.id, 7, 0.65, 0.25, 7), {});
  return dag;
}

TEST(WalkLaw, DiamondFixtureMatchesEnumeration) {
  expect_walk_matches_chain_law(diamond_fixture(), 1001);
}

TEST(WalkLaw, EqualBranchIsUniform) {
  const DagState dag = equal_branch_fixture();
  const std::map<std::uint64_t, double> exact = chain_law(dag,
                                                          dag.genesis_id());
  for (const auto& [tip, p] : exact) EXPECT_DOUBLE_EQ(p, 0.5);
  expect_walk_matches_chain_law(dag, 1002);
}

TEST(WalkLaw, IrregularFixtureMatchesEnumeration) {
  expect_walk_matches_chain_law(irregular_fixture(), 1003);
}

TEST(DotExport, ContainsNodesAndApprovalEdges) {
  DagState dag(0xabc, 0.5, 2.0);
  const std::uint64_t g = dag.genesis_id();
  const Transaction a = make_tx(g, g, 1, 0.8, 0.4, 1);
  dag.attach_transaction(a, {});
  const std::string dot = dag.to_dot();
  EXPECT_NE(dot.find("digraph tangle"), std::string::npos);
  EXPECT_NE(dot.find(id_hex(g)), std::string::npos);
  EXPECT_NE(dot.find(id_hex(a.id)), std::string::npos);
  EXPECT_NE(dot.find("\"" + id_hex(a.id) + "\" -> \"" + id_hex(g) + "\""),
            std::string::npos);
  EXPECT_NE(dot.find("W="), std::string::npos);
  EXPECT_NE(dot.find("CW="), std::string::npos);
  // Genesis has no outgoing approval edges.
  EXPECT_EQ(dot.find("\"" + id_hex(g) + "\" ->"), std::string::npos);
}

TEST(EventLog, OneLinePerAttachAndConfirm) {
  DagState dag(0xabc, 0.5, 0.3);
  const std::uint64_t g = dag.genesis_id();
  dag.attach_transaction(make_tx(g, g, 1, 0.8, 0.4, 1), {});
  dag.confirm_transactions();

  const std::string jsonl = dag.events_to_jsonl();
  std::istringstream in(jsonl);
  std::string line;
  std::size_t attaches = 0, confirms = 0, lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_NE(line.find("\"ts\":"), std::string::npos);
    EXPECT_NE(line.find("\"round\":"), std::string::npos);
    EXPECT_NE(line.find("\"actor\":"), std::string::npos);
    EXPECT_NE(line.find("\"event\":"), std::string::npos);
    EXPECT_NE(line.find("\"detail\":"), std::string::npos);
    if (line.find("\"attach\"") != std::string::npos) ++attaches;
    if (line.find("\"confirm\"") != std::string::npos) ++confirms;
  }
  EXPECT_EQ(attaches, 2u);  // genesis + one child
  EXPECT_EQ(confirms, 2u);  // theta = 0.3 confirms both
  EXPECT_EQ(lines, attaches + confirms);
}

}  // namespace
}  // namespace fedtangle
