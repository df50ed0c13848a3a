#ifndef DISPRED_TENSOR_IO_HPP
#define DISPRED_TENSOR_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dispred/matrix.hpp"

namespace dispred {

// Versioned little-endian container for named float64 tensors:
//   [8-byte magic][u32 version][u32 n_meta][meta u32 ...][u32 n_tensors]
//   then per tensor [u32 name_len][name][u64 rows][u64 cols][row-major doubles].
// Used for model checkpoints. Truncation, bad magic or an unsupported
// version raise CheckpointError; writes are atomic.
struct NamedTensor {
    std::string name;
    Matrix value; // vectors stored as n x 1
};

struct TensorFile {
    std::uint32_t version = 0;
    std::vector<std::uint32_t> meta;
    std::vector<NamedTensor> tensors;
};

void write_tensor_file(const std::string& path, const std::string& magic8,
                       std::uint32_t version, const std::vector<std::uint32_t>& meta,
                       const std::vector<NamedTensor>& tensors);

TensorFile read_tensor_file(const std::string& path, const std::string& magic8,
                            std::uint32_t expected_version);

} // namespace dispred

#endif
