#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pedalnet::binfile {

// Versioned binary container shared by network checkpoints and SVM models.
// Layout (all integers little-endian):
//   8 bytes  magic "PDLBIN01"
//   u32      payload kind (1 = network, 2 = svm)
//   u32      config text length, followed by that many bytes (key=value lines)
//   u32      block count
//   per block: u8 dtype (1 = f32, 2 = f64), u32 element count, raw elements
constexpr char kMagic[8] = {'P', 'D', 'L', 'B', 'I', 'N', '0', '1'};
constexpr std::uint32_t kKindNetwork = 1;
constexpr std::uint32_t kKindSvm = 2;

enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

struct Block {
    Dtype dtype = Dtype::f32;
    std::vector<float> f32;
    std::vector<double> f64;

    std::size_t size() const { return dtype == Dtype::f32 ? f32.size() : f64.size(); }
};

struct Container {
    std::uint32_t kind = 0;
    std::string config_text;
    std::vector<Block> blocks;

    void add_f32(const std::vector<float>& v);
    void add_f64(const std::vector<double>& v);
};

std::vector<std::uint8_t> serialize(const Container& c);

// Throws ModelError (bad magic), VersionError, or TruncatedFileError.
Container deserialize(const std::vector<std::uint8_t>& bytes);

void write_file(const std::string& path, const Container& c);
Container read_file(const std::string& path);

}  // namespace pedalnet::binfile
