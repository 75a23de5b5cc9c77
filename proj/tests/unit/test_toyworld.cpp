#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "sfe/errors.hpp"
#include "sfe/toyworld.hpp"

using namespace sfe;
using namespace sfe::toyworld;

TEST(Toyworld, RenderIsDeterministicAndInRange) {
  std::mt19937_64 rng(5);
  const auto a = sample_attributes(rng);
  const auto x = render_sample(a, 99, 32);
  const auto y = render_sample(a, 99, 32);
  EXPECT_TRUE(torch::equal(x.pixels, y.pixels));
  EXPECT_EQ(x.pixels.sizes(), torch::IntArrayRef({3, 32, 32}));
  EXPECT_EQ(x.pixels.scalar_type(), torch::kFloat32);
  EXPECT_GE(x.pixels.min().item<float>(), -1.0f);
  EXPECT_LE(x.pixels.max().item<float>(), 1.0f);
  EXPECT_EQ(x.face_mask.sizes(), torch::IntArrayRef({32, 32}));
  EXPECT_GT(x.face_mask.sum().item<long>(), 0);
}

TEST(Toyworld, RejectsBadInput) {
  AttributeVector a;
  a.smile = 1.5;
  EXPECT_THROW(a.validate(), InvalidInput);
  EXPECT_THROW(render_sample(a, 1, 32), InvalidInput);
  EXPECT_THROW(render_sample(AttributeVector{}, 1, 48), InvalidInput);
  EXPECT_THROW(render_sample(AttributeVector{}, 1, 16), InvalidInput);
  EXPECT_THROW(parse_attribute("moustache"), InvalidInput);
  EXPECT_THROW(build_manifest(0, 1, Split::train), InvalidInput);
}

TEST(Toyworld, AttributeChangesStayInTheirRegion) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto base = sample_attributes(rng);
    const std::uint64_t seed = rng();
    for (Attribute attr : {Attribute::smile, Attribute::glasses, Attribute::hair_shade, Attribute::bg_hue,
                           Attribute::accessory}) {
      auto other = base;
      switch (attr) {
        case Attribute::smile: other.smile = -base.smile; break;
        case Attribute::glasses: other.glasses = !base.glasses; break;
        case Attribute::hair_shade: other.hair_shade = 1.0 - base.hair_shade; break;
        case Attribute::bg_hue: other.bg_hue = base.bg_hue < 0.5 ? base.bg_hue + 0.4 : base.bg_hue - 0.4; break;
        case Attribute::accessory: other.accessory = !base.accessory; break;
        default: break;
      }
      const auto x = render_sample(base, seed, 64).pixels;
      const auto y = render_sample(other, seed, 64).pixels;
      const auto region = attribute_region(attr, base, 64) | attribute_region(attr, other, 64);
      const auto changed = (x - y).abs().amax(0) > 0;
      EXPECT_FALSE((changed & ~region).any().item<bool>())
          << attribute_name(attr) << " leaked outside its region (trial " << trial << ")";
    }
  }
}

TEST(Toyworld, RecordRoundTripAndPresence) {
  std::mt19937_64 rng(2);
  const auto a = sample_attributes(rng);
  const auto r = a.to_record();
  EXPECT_EQ(AttributeVector::from_record(r), a);
  AttributeVector v;
  v.smile = 0.1;
  v.face_size = 0.79;
  v.pose = -0.2;
  EXPECT_TRUE(v.presence(Attribute::smile));
  EXPECT_FALSE(v.presence(Attribute::face_size));
  EXPECT_FALSE(v.presence(Attribute::pose));
  for (Attribute x : kAllAttributes) EXPECT_EQ(parse_attribute(attribute_name(x)), x);
}

TEST(Toyworld, ManifestsAreDeterministicAndDisjoint) {
  const auto train = build_manifest(200, 7, Split::train);
  const auto test = build_manifest(50, 7, Split::test);
  EXPECT_EQ(train, build_manifest(200, 7, Split::train));
  for (const auto& t : test) {
    for (const auto& r : train) ASSERT_NE(t.seed, r.seed);
  }
  const auto dir = tsupport::temp_dir("manifest");
  write_manifest(dir / "m.jsonl", test);
  EXPECT_EQ(read_manifest(dir / "m.jsonl"), test);
}

TEST(Toyworld, MarginalsAreRespected) {
  std::mt19937_64 rng(9);
  Marginals m;
  m.glasses = 0.2;
  m.accessory = 0.9;
  int g = 0, acc = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto a = sample_attributes(rng, m);
    g += a.glasses;
    acc += a.accessory;
  }
  EXPECT_NEAR(g / double(n), 0.2, 0.03);
  EXPECT_NEAR(acc / double(n), 0.9, 0.03);
}

TEST(Toyworld, StackingHelpers) {
  const auto ds = build_dataset(5, 3, Split::train, 32);
  EXPECT_EQ(stack_pixels(ds).sizes(), torch::IntArrayRef({5, 3, 32, 32}));
  const auto p = presence_labels(ds);
  EXPECT_EQ(p.sizes(), torch::IntArrayRef({5, kNumAttributes}));
  EXPECT_EQ(p[2][1].item<float>(), ds[2].attrs.glasses ? 1.0f : 0.0f);
  EXPECT_EQ(attribute_values(ds).sizes(), torch::IntArrayRef({5, kNumAttributes}));
}
