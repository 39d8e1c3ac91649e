#pragma once

#include <string>

#include "ileumnet/localization.hpp"
#include "ileumnet/records.hpp"
#include "ileumnet/volume.hpp"

namespace ileumnet {

/// Synthetic abdomen: a noisy elliptical body containing a curved tube
/// standing in for the terminal ileum plus several distractor loops.
struct PhantomConfig {
  Extents3 extents{36, 80, 80};
  float body_intensity = 0.35f;
  float lumen_intensity = 0.65f;
  float noise_sigma = 0.06f;
  float background_sigma = 0.02f;
  // Threshold used to recover the patient box by region growing.
  float body_threshold = 0.15f;
  std::size_t distractors = 6;
  // Distractor lesion strength is uniform on [0, distractor_max_strength].
  double distractor_max_strength = 1.0;
  // Distractor centres follow the population distribution with its spread
  // scaled by this factor.
  double distractor_spread = 1.5;
  // Box centred on the ileum centroid that no distractor voxel enters.
  Extents3 clear_window{16, 30, 30};
  // Ileum half-length in voxels along its main direction.
  double tube_half_length = 9.0;
  // Distractor half-lengths are uniform on this range.
  double distractor_min_half_length = 4.0;
  double distractor_max_half_length = 7.0;
};

/// Generator ground truth not stored in the record.
struct PhantomTruth {
  double lesion_strength = 0.0;  // 0 healthy .. 1 most inflamed
  double wall_thickness = 0.0;   // voxels
  double wall_intensity = 0.0;
  Vec3 proportional_location{};
};

struct Phantom {
  Volume volume;
  PatientRecord record;
  PhantomTruth truth;
};

/// Wall thickness and intensity grow monotonically with severity; difficulty
/// falls with lesion strength. Deterministic for a given rng state.
Phantom generate_phantom(const std::string& id, int severity, const PopulationDistribution& dist,
                         const PhantomConfig& config, Rng& rng);

}  // namespace ileumnet
