#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace georef::xml {

// Minimal DOM for the CityGML subset: elements, attributes and text.
// Namespace prefixes are kept in `name`; matching is done on local names.
struct Element {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Element> children;
    std::string text;          // concatenated character data of this element
    std::int64_t byte_offset = 0;  // offset of '<' of the start tag

    std::string_view local_name() const {
        const auto pos = name.rfind(':');
        return pos == std::string::npos ? std::string_view(name)
                                        : std::string_view(name).substr(pos + 1);
    }

    const std::string* attribute(std::string_view local) const;

    // Depth-first visit of this element and all descendants.
    template <class Fn>
    void visit(Fn&& fn) const {
        fn(*this);
        for (const auto& c : children) c.visit(fn);
    }
};

// Parses a complete document and returns the root element. Throws
// georef::ParseError with a byte offset on malformed input.
Element parse_document(std::string_view data);

}  // namespace georef::xml
