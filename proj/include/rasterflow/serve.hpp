#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rasterflow/netgraph.hpp"
#include "rasterflow/pipeline.hpp"

namespace rflow {

enum class ServeMode { patch_based, fully_convolutional };

const char* serve_mode_name(ServeMode m);
ServeMode serve_mode_from_name(const std::string& name);  // "patch" | "fullconv"

struct ServeConfig {
  ServeMode mode = ServeMode::fully_convolutional;
  FieldSpec spec;
  std::string output;      // graph output name
  std::int64_t batch = 64;  // patches per forward call (patch mode)
};

// One pipeline input image bound to a named graph input.
struct BoundInput {
  ProcessObject* source = nullptr;
  std::string graph_input;
};

// Process object running a model over image regions.
//
// Block k covers output pixels [k*e, (k+1)*e) per axis and is computed from
// one receptive window per input. The reference input's window starts at
// k*e*f; a secondary input's window is centered on the physical center of
// the reference window on its own (aligned) grid, with top-left bias when
// the parities differ. Output blocks whose windows would leave a secondary
// input are trimmed from the end; a window out of bounds at block 0 is an
// error.
//
// Fully-convolutional mode fetches the union of the windows per input, runs
// forward once and crops; it requires valid padding and a spec that passes
// validate_fields. Patch mode runs forward on batches of single windows and
// only needs the patch shape check. Both modes give each output pixel a
// value that depends only on its own windows, so outputs are independent of
// the output partition (bit-exact) and of the batch size.
class ModelServeFilter : public ProcessObject {
 public:
  ModelServeFilter(std::shared_ptr<const ModelGraph> graph, ServeConfig config,
                   std::vector<BoundInput> inputs);

  std::string name() const override;
  const FieldSpec& spec() const { return config_.spec; }
  const ServeConfig& config() const { return config_; }

  // Populated by the first update_info().
  const FieldValidation& validation() const { return validation_; }

  std::vector<ImageRegion> required_input_regions(const ImageRegion& region) const override;
  std::int64_t extra_bytes(const ImageRegion& region) const override;

 protected:
  ImageInfo generate_info() override;
  PixelBuffer compute(const ImageRegion& region, std::vector<PixelBuffer> inputs) override;

 private:
  struct BlockRange {
    std::int64_t k0_row = 0, k1_row = 0;
    std::int64_t k0_col = 0, k1_col = 0;
  };

  std::int64_t window_start(std::size_t input, bool row_axis, std::int64_t block) const;
  Size2 receptive_of(std::size_t input) const;
  BlockRange block_range(const ImageRegion& region) const;
  ImageRegion window_union(std::size_t input, const BlockRange& blocks) const;
  std::map<std::string, TensorShape> tensor_shapes(const BlockRange& blocks) const;

  PixelBuffer compute_fullyconv(const ImageRegion& region, const BlockRange& blocks,
                                std::vector<PixelBuffer>& inputs);
  PixelBuffer compute_patchbased(const ImageRegion& region, const BlockRange& blocks,
                                 std::vector<PixelBuffer>& inputs);

  std::shared_ptr<const ModelGraph> graph_;
  ServeConfig config_;
  std::vector<std::string> input_names_;
  std::size_t reference_index_ = 0;
  FieldValidation validation_;
  std::int64_t out_channels_ = 0;
};

}  // namespace rflow
