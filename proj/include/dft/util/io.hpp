#pragma once

#include <string>
#include <vector>

namespace dft {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Deterministic "%.17g"-style shortest text for a double, locale-free.
std::string format_double(double v);

/// printf into a std::string with the classic C locale behavior of snprintf.
std::string strprintf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

void make_dirs(const std::string& path);
bool file_exists(const std::string& path);

}  // namespace dft
