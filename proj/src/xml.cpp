#include "georef/xml.hpp"

#include <cctype>

#include "georef/common.hpp"

namespace georef::xml {

const std::string* Element::attribute(std::string_view local) const {
    for (const auto& [k, v] : attributes) {
        const auto pos = k.rfind(':');
        std::string_view ln = pos == std::string::npos ? std::string_view(k)
                                                       : std::string_view(k).substr(pos + 1);
        if (ln == local) return &v;
    }
    return nullptr;
}

namespace {

class Parser {
public:
    explicit Parser(std::string_view data) : data_(data) {}

    Element parse() {
        skip_prolog();
        Element root = parse_element();
        skip_misc();
        if (pos_ != data_.size())
            fail("trailing content after document element");
        return root;
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("XML: " + msg, static_cast<std::int64_t>(pos_));
    }

    bool eof() const { return pos_ >= data_.size(); }
    char peek() const { return data_[pos_]; }
    bool starts_with(std::string_view s) const { return data_.substr(pos_, s.size()) == s; }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
    }

    void skip_until(std::string_view end, const char* what) {
        const auto at = data_.find(end, pos_);
        if (at == std::string_view::npos) fail(std::string("unterminated ") + what);
        pos_ = at + end.size();
    }

    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<!--")) {
                pos_ += 4;
                skip_until("-->", "comment");
            } else if (starts_with("<?")) {
                pos_ += 2;
                skip_until("?>", "processing instruction");
            } else {
                return;
            }
        }
    }

    void skip_prolog() {
        skip_misc();
        if (starts_with("<!DOCTYPE")) {
            skip_until(">", "DOCTYPE");
            skip_misc();
        }
    }

    std::string parse_name() {
        const std::size_t start = pos_;
        while (!eof()) {
            const char c = peek();
            if (std::isalnum(static_cast<unsigned char>(c)) || c == ':' || c == '_' ||
                c == '-' || c == '.') {
                ++pos_;
            } else {
                break;
            }
        }
        if (pos_ == start) fail("expected a name");
        return std::string(data_.substr(start, pos_ - start));
    }

    std::string decode_entities(std::string_view raw) const {
        if (raw.find('&') == std::string_view::npos) return std::string(raw);
        std::string out;
        out.reserve(raw.size());
        for (std::size_t i = 0; i < raw.size();) {
            if (raw[i] != '&') {
                out += raw[i++];
                continue;
            }
            const auto end = raw.find(';', i);
            if (end == std::string_view::npos)
                throw ParseError("XML: unterminated entity", static_cast<std::int64_t>(pos_));
            const std::string_view ent = raw.substr(i + 1, end - i - 1);
            if (ent == "amp") out += '&';
            else if (ent == "lt") out += '<';
            else if (ent == "gt") out += '>';
            else if (ent == "quot") out += '"';
            else if (ent == "apos") out += '\'';
            else
                throw ParseError("XML: unsupported entity &" + std::string(ent) + ";",
                                 static_cast<std::int64_t>(pos_));
            i = end + 1;
        }
        return out;
    }

    Element parse_element() {
        if (eof() || peek() != '<') fail("expected start tag");
        Element el;
        el.byte_offset = static_cast<std::int64_t>(pos_);
        ++pos_;
        el.name = parse_name();
        // attributes
        for (;;) {
            skip_ws();
            if (eof()) fail("unterminated start tag <" + el.name);
            if (peek() == '>') {
                ++pos_;
                break;
            }
            if (starts_with("/>")) {
                pos_ += 2;
                return el;
            }
            std::string key = parse_name();
            skip_ws();
            if (eof() || peek() != '=') fail("expected '=' after attribute " + key);
            ++pos_;
            skip_ws();
            if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
            const char quote = peek();
            ++pos_;
            const auto end = data_.find(quote, pos_);
            if (end == std::string_view::npos) fail("unterminated attribute value");
            el.attributes.emplace_back(std::move(key),
                                       decode_entities(data_.substr(pos_, end - pos_)));
            pos_ = end + 1;
        }
        // content
        for (;;) {
            if (eof()) fail("missing end tag </" + el.name + ">");
            if (peek() == '<') {
                if (starts_with("<!--")) {
                    pos_ += 4;
                    skip_until("-->", "comment");
                } else if (starts_with("<![CDATA[")) {
                    pos_ += 9;
                    const auto end = data_.find("]]>", pos_);
                    if (end == std::string_view::npos) fail("unterminated CDATA");
                    el.text.append(data_.substr(pos_, end - pos_));
                    pos_ = end + 3;
                } else if (starts_with("</")) {
                    pos_ += 2;
                    const std::string name = parse_name();
                    if (name != el.name)
                        fail("mismatched end tag </" + name + ">, expected </" + el.name + ">");
                    skip_ws();
                    if (eof() || peek() != '>') fail("malformed end tag");
                    ++pos_;
                    return el;
                } else if (starts_with("<?")) {
                    pos_ += 2;
                    skip_until("?>", "processing instruction");
                } else {
                    el.children.push_back(parse_element());
                }
            } else {
                const std::size_t start = pos_;
                while (!eof() && peek() != '<') ++pos_;
                el.text += decode_entities(data_.substr(start, pos_ - start));
            }
        }
    }
};

}  // namespace

Element parse_document(std::string_view data) { return Parser(data).parse(); }

}  // namespace georef::xml
