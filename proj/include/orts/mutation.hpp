#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "orts/imaging.hpp"

namespace orts {

enum class MutationKind { preserving, removing };

enum class MutationFunctionId { MvObjToImg, BldObjToImg, PsvObj, RmvObjByRGB, RmvObjByTool, RmvObjByMM };

struct MutationFunction {
  MutationFunctionId id;
  std::string_view name;
  MutationKind kind;
  int op_count;  // H_n
};

/// The six functions in catalog order.
const std::array<MutationFunction, 6>& mutation_functions();
const MutationFunction& mutation_function(MutationFunctionId id);
std::string_view to_string(MutationKind kind);

struct NamedColor {
  std::string_view name;
  Rgb rgb;
};
const std::array<NamedColor, 9>& fill_colors();

struct MutationOperation {
  MutationFunctionId function;
  /// Background index, color index, tool (0 fmm, 1 diffusion) or statistic
  /// (0 mean, 1 median), depending on the function.
  int ingredient = 0;
  std::string operation_id;

  MutationKind kind() const { return mutation_function(function).kind; }
  friend bool operator==(const MutationOperation&, const MutationOperation&) = default;
};

/// Twelve background images with stable ids.
class BackgroundLibrary {
 public:
  static constexpr std::size_t kSize = 12;

  /// Deterministic synthetic set: solids, gradients, noise, stripes.
  static BackgroundLibrary procedural(Dims dims = {256, 256});
  /// Exactly 12 PNGs, ids assigned in lexicographic filename order.
  static BackgroundLibrary from_directory(const std::filesystem::path& dir);

  std::size_t size() const { return images_.size(); }
  const RasterImage& image(std::size_t i) const { return images_.at(i); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }

 private:
  std::vector<RasterImage> images_;
  std::vector<std::string> ids_;
};

/// What a mutation acts on: the object region (mask or filled bbox), its
/// bbox, and whether a real segmentation mask stands behind the region.
struct MutationTarget {
  RegionMask region;
  BoundingBox bbox;
  bool has_mask = false;
};

struct Inapplicable {
  std::string reason;
};

using MutationResult = std::variant<RasterImage, Inapplicable>;

/// Imaging failure inside an operation, tagged with the operation id.
class MutationError : public Error {
 public:
  MutationError(std::string operation_id, const std::string& what)
      : Error(operation_id + ": " + what), operation_id_(std::move(operation_id)) {}
  const std::string& operation_id() const { return operation_id_; }

 private:
  std::string operation_id_;
};

struct WeightedOperation {
  const MutationOperation* op;
  double weight;
  /// weight == 1 / weight_denominator exactly.
  std::uint64_t weight_denominator;
};

class MutationCatalog {
 public:
  explicit MutationCatalog(BackgroundLibrary backgrounds = BackgroundLibrary::procedural(),
                           ImagingParams params = {});

  const std::vector<MutationOperation>& operations() const { return ops_; }
  const MutationOperation* find(std::string_view operation_id) const;
  const BackgroundLibrary& backgrounds() const { return backgrounds_; }
  const ImagingParams& params() const { return params_; }

  bool applicable(const MutationOperation& op, const MutationTarget& target) const;

  MutationResult apply(const MutationOperation& op, const RasterImage& src,
                       const MutationTarget& target) const;

  /// Applicable operations of `kind` with weights 1/(H_n * N), N being the
  /// number of functions of that kind with at least one applicable operation.
  /// Throws when nothing of that kind applies.
  std::vector<WeightedOperation> enumerate(MutationKind kind, const MutationTarget& target) const;

 private:
  RasterImage apply_unchecked(const MutationOperation& op, const RasterImage& src,
                              const MutationTarget& target) const;

  BackgroundLibrary backgrounds_;
  ImagingParams params_;
  std::vector<MutationOperation> ops_;
};

}  // namespace orts
