#pragma once

#include "pgd/grid.hpp"
#include "pgd/types.hpp"

namespace pgd {

/// Spatial (H x W) and per-location channel (C x H x W) attention of one
/// feature map.
struct AttentionPair {
    Grid spatial;
    Volume channel;
    double tau = 0.8;
};

/// P = H*W * softmax over positions of (sum_k |F_k,i,j|) / tau; sums to H*W.
Grid spatial_attention(const Volume& features, double tau);

/// A = C * softmax over channels of |F_k,i,j| / tau, independently at every
/// location; sums to C at each (i, j).
Volume channel_attention(const Volume& features, double tau);

AttentionPair attention_pair(const Volume& features, double tau);

inline AttentionPair attention_pair(const FeatureTensor& features, double tau) {
    return attention_pair(Volume::from(features), tau);
}

/// Normalized background mask of one level: 1/(#background) at cells whose
/// center lies in no GT box, 0 elsewhere; all-zero when nothing is
/// background.
Grid background_level(const LevelGeometry& level, std::span<const Box> gt);

LevelMaps background_mask(const SceneBundle& bundle);

} // namespace pgd
