//! Checks that rotating a piece rotates its features: quarter turns permute
//! the four patch blocks, 3D rotations turn every vector channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reassembly::data::{generate_fragments, synth_image, ImageStyle, ShapeKind};
use reassembly::encoders::{
    center_piece, encode_cloud_vn, encode_patch_c4, group_act_c4, group_act_so3, CloudEncoder, CloudEncoderConfig, Patch, PatchEncoder,
    PatchEncoderConfig,
};
use reassembly::geometry::uniform_rotation;
use reassembly::params::ParamSet;

fn main() -> reassembly::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamSet::new();
    let patch_enc = PatchEncoder::new(PatchEncoderConfig::default(), &mut params, &mut rng)?;
    let cloud_enc = CloudEncoder::new(CloudEncoderConfig::default(), &mut params, &mut rng)?;

    let img = synth_image(16, ImageStyle::Structured, 1);
    let patch = Patch::new(16, img.data)?;
    let h = encode_patch_c4(&patch_enc, &params, &patch)?;
    for k in 1..4 {
        let turned = encode_patch_c4(&patch_enc, &params, &patch.rot90(k))?;
        println!("patch rotated {} deg: features match block shift {k}: {}", 90 * k, turned == group_act_c4(k, &h)?);
    }

    let set = generate_fragments(ShapeKind::Composite, 3, 2)?;
    let cloud = center_piece(&set.fragments[0])?.0;
    let h = encode_cloud_vn(&cloud_enc, &params, &cloud)?;
    for _ in 0..3 {
        let r = uniform_rotation(&mut rng);
        let rotated: Vec<[f64; 3]> = cloud
            .iter()
            .map(|p| {
                let v = r.apply(&nalgebra::Vector3::new(p[0], p[1], p[2]));
                [v.x, v.y, v.z]
            })
            .collect();
        let got = encode_cloud_vn(&cloud_enc, &params, &rotated)?;
        let want = group_act_so3(&r, &h)?;
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("cloud rotated by {:.2} rad: max feature residual {err:.1e}", r.angle());
    }
    Ok(())
}
