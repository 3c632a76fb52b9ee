fn main() {
    println!("{}", murk::scene::presets::reference_sphere().to_json_pretty());
}
