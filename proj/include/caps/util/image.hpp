#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace caps {

// Interleaved 8-bit image, row-major, `channels` values per pixel.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c = 3, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[index(y, x, c)]; }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// Camera observation; RGB.
using Observation = Image;
using FramePtr = std::shared_ptr<const Observation>;

// Policy input: the previous and current frames. Frames are shared between
// consecutive stacks and between replay records.
struct StackedObs {
  FramePtr previous;
  FramePtr current;

  // Stack used at episode start: the first frame duplicated.
  static StackedObs initial(FramePtr first) { return {first, first}; }
  StackedObs push(FramePtr next) const { return {current, std::move(next)}; }

  int height() const { return current->height; }
  int width() const { return current->width; }
};

}  // namespace caps
