#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace robust::csv {

// 17 significant digits, '.' decimal point, independent of the global locale.
std::string number(double value);
std::string boolean(bool value);
std::string quote(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace robust::csv
