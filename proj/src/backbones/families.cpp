#include <string>

#include "network.hpp"

namespace icethick {
namespace {

std::string block_name(std::size_t stage, std::size_t block) {
  return "stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

// First block of every stage after the first downsamples.
std::size_t block_stride(std::size_t stage, std::size_t block) {
  return stage > 0 && block == 0 ? 2 : 1;
}

Features resnet(NetworkBuilder& b, const ArchitectureSpec& spec, int x, std::size_t ch) {
  for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
    const std::size_t width = spec.stage_widths[s];
    for (std::size_t k = 0; k < spec.blocks_per_stage; ++k) {
      const std::string name = block_name(s, k);
      const std::size_t stride = block_stride(s, k);
      int f = b.conv_bn_relu(name + ".a", x, ch, width, 3, stride, 1);
      f = b.conv(name + ".b.conv", f, width, width, 3, 1, 1, false);
      f = b.batchnorm(name + ".b.bn", f, width);
      int skip = x;
      if (stride != 1 || ch != width) skip = b.conv(name + ".proj", x, ch, width, 1, stride, 0, true);
      x = b.relu(b.residual(skip, f));
      ch = width;
    }
  }
  return {x, ch};
}

Features densenet(NetworkBuilder& b, const ArchitectureSpec& spec, int x, std::size_t ch) {
  constexpr std::size_t kSublayers = 4;
  const std::size_t stages = spec.stage_widths.size();
  for (std::size_t s = 0; s < stages; ++s) {
    std::vector<int> features{x};
    std::size_t total = ch;
    for (std::size_t l = 0; l < kSublayers; ++l) {
      const std::string name = "stage" + std::to_string(s) + ".dense" + std::to_string(l);
      const int joined = features.size() == 1 ? features[0] : b.concat(features);
      const int h = b.relu(b.batchnorm(name + ".bn", joined, total));
      features.push_back(b.conv(name + ".conv", h, total, spec.growth_rate, 3, 1, 1, false));
      total += spec.growth_rate;
    }
    x = b.concat(features);
    ch = total;
    if (s + 1 < stages) {
      const std::size_t half = ch / 2 > 0 ? ch / 2 : 1;
      x = b.conv("stage" + std::to_string(s) + ".transition", x, ch, half, 1, 1, 0, true);
      x = b.maxpool(x, 2, 2, 0);
      ch = half;
    }
  }
  x = b.relu(b.batchnorm("final.bn", x, ch));
  return {x, ch};
}

Features inception(NetworkBuilder& b, const ArchitectureSpec& spec, int x, std::size_t ch) {
  for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
    const std::size_t width = spec.stage_widths[s];
    const std::size_t branch = width / 4;
    const std::size_t first = width - 3 * branch;
    for (std::size_t k = 0; k < spec.blocks_per_stage; ++k) {
      const std::string name = block_name(s, k);
      const std::size_t stride = block_stride(s, k);
      const int b1 = b.conv_bn_relu(name + ".b1x1", x, ch, first, 1, stride, 0);
      int b3 = b.conv_bn_relu(name + ".b3x3_reduce", x, ch, branch, 1, 1, 0);
      b3 = b.conv_bn_relu(name + ".b3x3", b3, branch, branch, 3, stride, 1);
      int b5 = b.conv_bn_relu(name + ".b5x5_reduce", x, ch, branch, 1, 1, 0);
      b5 = b.conv_bn_relu(name + ".b5x5", b5, branch, branch, 5, stride, 2);
      int bp = b.maxpool(x, 3, stride, 1);
      bp = b.conv_bn_relu(name + ".bpool", bp, ch, branch, 1, 1, 0);
      x = b.concat({b1, b3, b5, bp});
      ch = width;
    }
  }
  return {x, ch};
}

Features xception(NetworkBuilder& b, const ArchitectureSpec& spec, int x, std::size_t ch) {
  for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
    const std::size_t width = spec.stage_widths[s];
    for (std::size_t k = 0; k < spec.blocks_per_stage; ++k) {
      const std::string name = block_name(s, k);
      const std::size_t stride = block_stride(s, k);
      int f = b.depthwise(name + ".sep1.depthwise", x, ch, 3, stride, 1);
      f = b.conv(name + ".sep1.pointwise", f, ch, width, 1, 1, 0, false);
      f = b.relu(b.batchnorm(name + ".sep1.bn", f, width));
      f = b.depthwise(name + ".sep2.depthwise", f, width, 3, 1, 1);
      f = b.conv(name + ".sep2.pointwise", f, width, width, 1, 1, 0, false);
      f = b.relu(b.batchnorm(name + ".sep2.bn", f, width));
      int skip = x;
      if (stride != 1 || ch != width) skip = b.conv(name + ".proj", x, ch, width, 1, stride, 0, true);
      x = b.residual(skip, f);
      ch = width;
    }
  }
  return {x, ch};
}

Features mobilenet(NetworkBuilder& b, const ArchitectureSpec& spec, int x, std::size_t ch) {
  for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
    const std::size_t width = spec.stage_widths[s];
    for (std::size_t k = 0; k < spec.blocks_per_stage; ++k) {
      const std::string name = block_name(s, k);
      const std::size_t stride = block_stride(s, k);
      const std::size_t hidden = ch * spec.expansion;
      int f = b.conv_bn_relu(name + ".expand", x, ch, hidden, 1, 1, 0);
      f = b.depthwise(name + ".depthwise", f, hidden, 3, stride, 1);
      f = b.relu(b.batchnorm(name + ".depthwise_bn", f, hidden));
      f = b.conv(name + ".project.conv", f, hidden, width, 1, 1, 0, false);
      f = b.batchnorm(name + ".project.bn", f, width);
      x = (stride == 1 && ch == width) ? b.residual(x, f) : f;
      ch = width;
    }
  }
  return {x, ch};
}

}  // namespace

Features build_body(NetworkBuilder& b, BackboneKind kind, const ArchitectureSpec& spec, int input) {
  const int stem = b.conv_bn_relu("stem", input, spec.input_channels, spec.stem_channels, 3, 1, 1);
  switch (kind) {
    case BackboneKind::mini_resnet: return resnet(b, spec, stem, spec.stem_channels);
    case BackboneKind::mini_densenet: return densenet(b, spec, stem, spec.stem_channels);
    case BackboneKind::mini_inception: return inception(b, spec, stem, spec.stem_channels);
    case BackboneKind::mini_xception: return xception(b, spec, stem, spec.stem_channels);
    case BackboneKind::mini_mobilenet: return mobilenet(b, spec, stem, spec.stem_channels);
  }
  return {stem, spec.stem_channels};
}

}  // namespace icethick
