#ifndef DISPRED_FSIO_HPP
#define DISPRED_FSIO_HPP

#include <string>

namespace dispred {

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

bool file_exists(const std::string& path);

} // namespace dispred

#endif
