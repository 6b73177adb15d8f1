#pragma once

#include <map>
#include <string>
#include <vector>

namespace shiftmae {

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed. Later keys win.
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& key, const std::string& value);
std::string join_ints(const std::vector<int>& values);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

}  // namespace shiftmae
