#include <algorithm>
#include <bit>
#include <cstring>

#include "mauv/gateway.hpp"

namespace mauv::gateway {

namespace {

enum Tag : std::uint8_t { tag_double = 1, tag_string = 2, tag_binary = 3 };

// version + tag + timestamp + key length + source length + value length
constexpr std::size_t kFixedBody = 1 + 1 + 8 + 1 + 2 + 4;

void put_u16(Bytes& b, std::uint16_t v)
{
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& b, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8)
        b.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(Bytes& b, std::uint64_t v)
{
    for (int s = 56; s >= 0; s -= 8)
        b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint64_t get_be(const std::uint8_t* p, int n)
{
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
        v = (v << 8) | p[i];
    return v;
}

DecodeResult fail(std::string why)
{
    DecodeResult r;
    r.status = DecodeStatus::error;
    r.error = std::move(why);
    return r;
}

} // namespace

Bytes encode(const WireMessage& msg)
{
    if (msg.key.empty())
        throw CodecError("message key must not be empty");
    if (msg.key.size() > 255)
        throw CodecError("message key longer than 255 bytes");
    if (msg.source.size() > 0xFFFF)
        throw CodecError("message source too long");

    std::uint8_t tag = 0;
    std::size_t value_len = 0;
    if (std::holds_alternative<double>(msg.value)) {
        tag = tag_double;
        value_len = 8;
    }
    else if (const auto* s = std::get_if<std::string>(&msg.value)) {
        tag = tag_string;
        value_len = s->size();
    }
    else {
        tag = tag_binary;
        value_len = std::get<Bytes>(msg.value).size();
    }

    const std::size_t body = kFixedBody + msg.key.size() + msg.source.size() + value_len;
    if (kHeaderBytes + body > kMaxFrameBytes)
        throw CodecError("message exceeds the 64 KiB frame limit");

    Bytes out;
    out.reserve(kHeaderBytes + body);
    put_u32(out, static_cast<std::uint32_t>(body));
    out.push_back(kWireVersion);
    out.push_back(tag);
    put_u64(out, std::bit_cast<std::uint64_t>(msg.timestamp));
    out.push_back(static_cast<std::uint8_t>(msg.key.size()));
    out.insert(out.end(), msg.key.begin(), msg.key.end());
    put_u16(out, static_cast<std::uint16_t>(msg.source.size()));
    out.insert(out.end(), msg.source.begin(), msg.source.end());
    put_u32(out, static_cast<std::uint32_t>(value_len));
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>)
                put_u64(out, std::bit_cast<std::uint64_t>(v));
            else
                out.insert(out.end(), v.begin(), v.end());
        },
        msg.value);
    return out;
}

DecodeResult decode_frame(std::span<const std::uint8_t> data)
{
    if (data.size() < kHeaderBytes)
        return {};
    const std::size_t body = get_be(data.data(), 4);
    if (body + kHeaderBytes > kMaxFrameBytes)
        return fail("frame length exceeds limit");
    if (body < kFixedBody)
        return fail("frame shorter than fixed fields");
    // Validate what is already available so garbage fails early.
    if (data.size() >= kHeaderBytes + 1 && data[4] != kWireVersion)
        return fail("unsupported version");
    if (data.size() >= kHeaderBytes + 2 && (data[5] < tag_double || data[5] > tag_binary))
        return fail("unknown value tag");
    if (data.size() < kHeaderBytes + body)
        return {};

    const std::uint8_t* p = data.data() + kHeaderBytes;
    const std::uint8_t* end = p + body;
    DecodeResult r;
    const std::uint8_t tag = p[1];
    r.message.timestamp = std::bit_cast<double>(get_be(p + 2, 8));
    p += 10;

    const std::size_t key_len = *p++;
    if (key_len == 0)
        return fail("empty key");
    if (static_cast<std::size_t>(end - p) < key_len + 2)
        return fail("key overruns frame");
    r.message.key.assign(reinterpret_cast<const char*>(p), key_len);
    p += key_len;

    const std::size_t src_len = get_be(p, 2);
    p += 2;
    if (static_cast<std::size_t>(end - p) < src_len + 4)
        return fail("source overruns frame");
    r.message.source.assign(reinterpret_cast<const char*>(p), src_len);
    p += src_len;

    const std::size_t val_len = get_be(p, 4);
    p += 4;
    if (static_cast<std::size_t>(end - p) != val_len)
        return fail("value length does not match frame length");
    switch (tag) {
    case tag_double:
        if (val_len != 8)
            return fail("double value must be 8 bytes");
        r.message.value = std::bit_cast<double>(get_be(p, 8));
        break;
    case tag_string:
        r.message.value = std::string(reinterpret_cast<const char*>(p), val_len);
        break;
    default:
        r.message.value = Bytes(p, p + val_len);
        break;
    }
    r.status = DecodeStatus::ok;
    r.consumed = kHeaderBytes + body;
    return r;
}

WireMessage decode(std::span<const std::uint8_t> data)
{
    DecodeResult r = decode_frame(data);
    if (r.status == DecodeStatus::incomplete)
        throw CodecError("truncated frame");
    if (r.status == DecodeStatus::error)
        throw CodecError(r.error);
    if (r.consumed != data.size())
        throw CodecError("trailing bytes after frame");
    return std::move(r.message);
}

void FrameDecoder::feed(std::span<const std::uint8_t> data)
{
    if (failed())
        return;
    if (pos_ > 0 && pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
    }
    else if (pos_ > 4096) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
        pos_ = 0;
    }
    buf_.insert(buf_.end(), data.begin(), data.end());
}

std::optional<WireMessage> FrameDecoder::next()
{
    if (failed())
        return std::nullopt;
    DecodeResult r = decode_frame(std::span<const std::uint8_t>(buf_).subspan(pos_));
    if (r.status == DecodeStatus::error) {
        error_ = r.error;
        return std::nullopt;
    }
    if (r.status == DecodeStatus::incomplete)
        return std::nullopt;
    pos_ += r.consumed;
    return std::move(r.message);
}

bool key_matches(std::string_view pattern, std::string_view key)
{
    if (!pattern.empty() && pattern.back() == '*') {
        const auto prefix = pattern.substr(0, pattern.size() - 1);
        return key.substr(0, prefix.size()) == prefix;
    }
    return pattern == key;
}

// --- Bus --------------------------------------------------------------------------------

void Subscriber::add_pattern(std::string p)
{
    std::lock_guard lk(m_);
    if (std::find(patterns_.begin(), patterns_.end(), p) == patterns_.end())
        patterns_.push_back(std::move(p));
}

void Subscriber::remove_pattern(const std::string& p)
{
    std::lock_guard lk(m_);
    patterns_.erase(std::remove(patterns_.begin(), patterns_.end(), p), patterns_.end());
}

bool Subscriber::wants(std::string_view key) const
{
    std::lock_guard lk(m_);
    return std::any_of(patterns_.begin(), patterns_.end(), [&](const auto& p) { return key_matches(p, key); });
}

std::shared_ptr<Subscriber> Bus::subscribe(std::vector<std::string> patterns, std::size_t capacity)
{
    std::lock_guard lk(m_);
    auto s = std::make_shared<Subscriber>(next_id_++, capacity);
    for (auto& p : patterns)
        s->add_pattern(std::move(p));
    subs_.push_back(s);
    return s;
}

void Bus::unsubscribe(const std::shared_ptr<Subscriber>& s)
{
    std::lock_guard lk(m_);
    subs_.erase(std::remove(subs_.begin(), subs_.end(), s), subs_.end());
    s->queue().close();
}

void Bus::publish(const WireMessage& msg, std::uint64_t origin)
{
    ++published_;
    std::lock_guard lk(m_);
    for (const auto& s : subs_) {
        if (s->id() == origin || !s->wants(msg.key))
            continue;
        if (!s->queue().push(msg) && !s->queue().closed())
            s->mark_overflow();
    }
}

} // namespace mauv::gateway
