#include "ileumnet/folds.hpp"

#include <algorithm>
#include <set>

#include "ileumnet/tensor.hpp"

namespace ileumnet {

FoldPlan make_folds(std::span<const PatientRecord> records, std::size_t k, std::uint64_t seed) {
  require(k >= 1, ErrorCode::kInvalidArgument, "fold count must be positive");
  std::vector<std::string> ids;
  std::array<std::vector<std::string>, 2> by_class;
  std::set<std::string> seen;
  for (const auto& r : records) {
    require(seen.insert(r.id).second, ErrorCode::kInvalidArgument, "duplicate record id " + r.id);
    by_class[r.class_index()].push_back(r.id);
    ids.push_back(r.id);
  }
  std::sort(ids.begin(), ids.end());

  FoldPlan plan;
  plan.folds.resize(k);
  if (k == 1) {
    require(!ids.empty(), ErrorCode::kClassTooSmall, "no records to fold");
    plan.folds[0] = {ids, ids};
    return plan;
  }

  std::size_t counter = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    require(members.size() >= k, ErrorCode::kClassTooSmall,
            std::string(c == 0 ? "healthy" : "abnormal") + " class has " + std::to_string(members.size()) +
                " records, fewer than " + std::to_string(k) + " folds");
    std::sort(members.begin(), members.end());
    Rng rng(derive_seed(seed, {0x666f6c64, c}));
    std::shuffle(members.begin(), members.end(), rng);
    for (const auto& id : members) plan.folds[counter++ % k].test_ids.push_back(id);
  }
  for (auto& fold : plan.folds) {
    std::sort(fold.test_ids.begin(), fold.test_ids.end());
    std::set_difference(ids.begin(), ids.end(), fold.test_ids.begin(), fold.test_ids.end(),
                        std::back_inserter(fold.train_ids));
  }
  return plan;
}

}  // namespace ileumnet
