#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ileumnet/records.hpp"

namespace ileumnet {

struct Fold {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct FoldPlan {
  std::vector<Fold> folds;
};

/// Stratified by binary label. Records are ordered by id before a seeded
/// per-class shuffle, so the plan ignores input order. Members are dealt
/// round-robin with a single counter running across classes. With k = 1 the
/// single fold trains and tests on every record.
FoldPlan make_folds(std::span<const PatientRecord> records, std::size_t k, std::uint64_t seed);

}  // namespace ileumnet
