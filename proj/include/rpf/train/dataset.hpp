#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rpf/core/rng.hpp"
#include "rpf/imaging/imaging.hpp"

namespace rpf::train {

using imaging::SourcePair;

struct ManifestEntry {
    std::string ir_path, vis_path;
};

struct DatasetManifest {
    std::vector<ManifestEntry> pairs;
    std::vector<std::string> rejects;  // files present on one side only
    std::string split = "train";
};

/// Pairs same-named image files from two directories, lexicographically.
/// Unpaired files land in rejects; missing directories throw.
DatasetManifest ingest(const std::string& dir_ir, const std::string& dir_vis);

class Dataset {
public:
    virtual ~Dataset() = default;
    virtual size_t size() const = 0;
    virtual SourcePair load(size_t index) const = 0;
};

class FileDataset : public Dataset {
public:
    explicit FileDataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {}
    size_t size() const override { return manifest_.pairs.size(); }
    SourcePair load(size_t index) const override;  // throws on dimension mismatch
    const DatasetManifest& manifest() const { return manifest_; }

private:
    DatasetManifest manifest_;
};

/// Procedurally generated hot-blob infrared + textured visible pairs, fully
/// determined by (seed, index). Keeps smoke training free of downloads.
class SyntheticDataset : public Dataset {
public:
    SyntheticDataset(int count, int height, int width, uint64_t seed)
        : count_(count), h_(height), w_(width), seed_(seed) {}
    size_t size() const override { return static_cast<size_t>(count_); }
    SourcePair load(size_t index) const override;

private:
    int count_, h_, w_;
    uint64_t seed_;
};

SourcePair make_synthetic_pair(uint64_t seed, int index, int h, int w);

/// Identical random crop window applied to every plane of the pair.
/// Throws std::invalid_argument if the crop does not fit.
SourcePair augment_crop(const SourcePair& pair, int crop, core::Rng& rng);

}  // namespace rpf::train
