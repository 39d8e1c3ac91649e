#pragma once

#include "ileumnet/tensor.hpp"
#include "ileumnet/volume.hpp"

namespace ileumnet {

struct AugmentConfig {
  double max_rotation_deg = 15.0;
  double rotation_prob = 1.0;
  double flip_prob = 0.5;
  double crop_fraction = 0.9;
  double crop_prob = 1.0;
};

// Trilinear sample at continuous voxel-centre coordinates; out-of-range
// positions reflect back into the volume.
float sample_trilinear(const Volume& v, double z, double y, double x);

/// Rotation about the axial (depth) axis through the in-plane centre.
Volume rotate_axial(const Volume& v, double angle_deg);

/// Mirror along W.
Volume flip_horizontal(const Volume& v);

/// Crops `box`, then centres it in a volume of the original extents and fills
/// the border by mirror reflection.
Volume crop_recenter(const Volume& v, const Box3& box);

/// Random rotation, horizontal flip and crop, each drawn independently.
Volume augment(const Volume& v, Rng& rng, const AugmentConfig& config = {});

}  // namespace ileumnet
