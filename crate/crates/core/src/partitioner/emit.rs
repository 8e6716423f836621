//! Image files: `EPIMG\x01`, a u32 payload length, then a canonical binary
//! encoding of the [`ImageSpec`].

use std::fs;
use std::path::Path;

use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::dsl::*;

use super::{
    ClassInfo, ConcreteClass, Direction, EntryPoint, ImageSpec, MarshalKind, PartitionError, PartitionPlan,
    ProxyClassDef, RelayKind, RelayMethodDef, Side, StubDef,
};

pub const IMAGE_MAGIC: &[u8; 6] = b"EPIMG\x01";
pub const TRUSTED_FILE: &str = "trusted.img";
pub const UNTRUSTED_FILE: &str = "untrusted.img";
pub const INTERFACE_FILE: &str = "interface.edl.txt";

/// Writes the two images and the interface descriptor into `dir`.
pub fn emit(plan: &PartitionPlan, dir: &Path) -> Result<(), PartitionError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PartitionError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        (TRUSTED_FILE, encode_image(&plan.trusted)),
        (UNTRUSTED_FILE, encode_image(&plan.untrusted)),
        (INTERFACE_FILE, plan.interface.to_text().into_bytes()),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
    }
    Ok(())
}

pub fn encode_image(image: &ImageSpec) -> Vec<u8> {
    let mut body = ByteWriter::new();
    image.enc(&mut body);
    let mut w = ByteWriter::new();
    w.bytes(IMAGE_MAGIC);
    w.len_prefix(body.len());
    w.bytes(&body.into_bytes());
    w.into_bytes()
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageSpec, DecodeError> {
    let mut r = ByteReader::new(bytes);
    if r.take(IMAGE_MAGIC.len()).ok() != Some(&IMAGE_MAGIC[..]) {
        return Err(DecodeError::BadMagic);
    }
    let len = r.len_prefix(1)?;
    if len != r.remaining() {
        return Err(DecodeError::Invalid(format!("payload length {len} does not match {}", r.remaining())));
    }
    let image = ImageSpec::dec(&mut r)?;
    r.finish()?;
    Ok(image)
}

/// Reads and decodes an image file.
pub fn read_image(path: &Path) -> Result<ImageSpec, PartitionError> {
    let bytes = fs::read(path).map_err(|source| PartitionError::Io { path: path.to_path_buf(), source })?;
    decode_image(&bytes).map_err(|e| PartitionError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

trait Enc: Sized {
    fn enc(&self, w: &mut ByteWriter);
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError>;
}

impl Enc for String {
    fn enc(&self, w: &mut ByteWriter) {
        w.str(self);
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        r.string()
    }
}

impl Enc for bool {
    fn enc(&self, w: &mut ByteWriter) {
        w.bool(*self);
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        r.bool()
    }
}

impl Enc for u32 {
    fn enc(&self, w: &mut ByteWriter) {
        w.u32(*self);
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        r.u32()
    }
}

impl<T: Enc> Enc for Vec<T> {
    fn enc(&self, w: &mut ByteWriter) {
        w.len_prefix(self.len());
        self.iter().for_each(|x| x.enc(w));
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        let n = r.len_prefix(1)?;
        (0..n).map(|_| T::dec(r)).collect()
    }
}

impl<T: Enc> Enc for Option<T> {
    fn enc(&self, w: &mut ByteWriter) {
        match self {
            None => w.u8(0),
            Some(x) => {
                w.u8(1);
                x.enc(w);
            }
        }
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::dec(r)?)),
            t => Err(r.bad_tag("option", t)),
        }
    }
}

impl<T: Enc> Enc for Box<T> {
    fn enc(&self, w: &mut ByteWriter) {
        (**self).enc(w);
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        T::dec(r).map(Box::new)
    }
}

/// Unit-like enums encoded as a single tag byte in declaration order.
macro_rules! tag_enum {
    ($ty:ident, $what:literal, [$($variant:ident),+ $(,)?]) => {
        impl Enc for $ty {
            fn enc(&self, w: &mut ByteWriter) {
                let all = [$($ty::$variant),+];
                w.u8(all.iter().position(|v| v == self).unwrap() as u8);
            }
            fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
                let all = [$($ty::$variant),+];
                let t = r.u8()?;
                all.get(t as usize).copied().ok_or_else(|| r.bad_tag($what, t))
            }
        }
    };
}

tag_enum!(Annotation, "annotation", [Trusted, Untrusted, Neutral]);
tag_enum!(Visibility, "visibility", [Public, Private]);
tag_enum!(Side, "side", [Trusted, Untrusted]);
tag_enum!(Direction, "direction", [Ecall, Ocall]);
tag_enum!(MarshalKind, "marshal kind", [Primitive, SerializedNeutral, HashRef]);
tag_enum!(RelayKind, "relay kind", [Constructor, Instance]);
tag_enum!(UnOp, "unary operator", [Neg, Not]);
tag_enum!(Builtin, "builtin", [Print, FileWrite, FileRead, Compute, Gc]);
tag_enum!(BinOp, "binary operator", [Add, Sub, Mul, Div, Rem, Eq, Ne, Lt, Le, Gt, Ge, And, Or]);

impl Enc for TypeRef {
    fn enc(&self, w: &mut ByteWriter) {
        match self {
            TypeRef::Int => w.u8(0),
            TypeRef::Bool => w.u8(1),
            TypeRef::Str => w.u8(2),
            TypeRef::List(elem) => {
                w.u8(3);
                elem.enc(w);
            }
            TypeRef::Class(name) => {
                w.u8(4);
                w.str(name);
            }
            TypeRef::Unit => w.u8(5),
        }
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => TypeRef::Int,
            1 => TypeRef::Bool,
            2 => TypeRef::Str,
            3 => TypeRef::List(Enc::dec(r)?),
            4 => TypeRef::Class(r.string()?),
            5 => TypeRef::Unit,
            t => return Err(r.bad_tag("type", t)),
        })
    }
}

impl Enc for Expr {
    fn enc(&self, w: &mut ByteWriter) {
        match self {
            Expr::Int(v) => {
                w.u8(0);
                w.i64(*v);
            }
            Expr::Bool(b) => {
                w.u8(1);
                w.bool(*b);
            }
            Expr::Str(s) => {
                w.u8(2);
                w.str(s);
            }
            Expr::Var(name) => {
                w.u8(3);
                w.str(name);
            }
            Expr::This => w.u8(4),
            Expr::Field { target, name } => {
                w.u8(5);
                target.enc(w);
                w.str(name);
            }
            Expr::Unary { op, expr } => {
                w.u8(6);
                op.enc(w);
                expr.enc(w);
            }
            Expr::Binary { op, lhs, rhs } => {
                w.u8(7);
                op.enc(w);
                lhs.enc(w);
                rhs.enc(w);
            }
            Expr::New { class, args } => {
                w.u8(8);
                w.str(class);
                args.enc(w);
            }
            Expr::NewList { elem } => {
                w.u8(9);
                elem.enc(w);
            }
            Expr::ListLit(items) => {
                w.u8(10);
                items.enc(w);
            }
            Expr::Call { receiver, method, args } => {
                w.u8(11);
                receiver.enc(w);
                w.str(method);
                args.enc(w);
            }
            Expr::StaticCall { class, method, args } => {
                w.u8(12);
                w.str(class);
                w.str(method);
                args.enc(w);
            }
            Expr::Builtin { func, args } => {
                w.u8(13);
                func.enc(w);
                args.enc(w);
            }
        }
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => Expr::Int(r.i64()?),
            1 => Expr::Bool(r.bool()?),
            2 => Expr::Str(r.string()?),
            3 => Expr::Var(r.string()?),
            4 => Expr::This,
            5 => Expr::Field { target: Enc::dec(r)?, name: r.string()? },
            6 => Expr::Unary { op: Enc::dec(r)?, expr: Enc::dec(r)? },
            7 => Expr::Binary { op: Enc::dec(r)?, lhs: Enc::dec(r)?, rhs: Enc::dec(r)? },
            8 => Expr::New { class: r.string()?, args: Enc::dec(r)? },
            9 => Expr::NewList { elem: Enc::dec(r)? },
            10 => Expr::ListLit(Enc::dec(r)?),
            11 => Expr::Call { receiver: Enc::dec(r)?, method: r.string()?, args: Enc::dec(r)? },
            12 => Expr::StaticCall { class: r.string()?, method: r.string()?, args: Enc::dec(r)? },
            13 => Expr::Builtin { func: Enc::dec(r)?, args: Enc::dec(r)? },
            t => return Err(r.bad_tag("expression", t)),
        })
    }
}

impl Enc for Stmt {
    fn enc(&self, w: &mut ByteWriter) {
        match self {
            Stmt::Let { name, ty, init } => {
                w.u8(0);
                w.str(name);
                ty.enc(w);
                init.enc(w);
            }
            Stmt::Assign { name, value } => {
                w.u8(1);
                w.str(name);
                value.enc(w);
            }
            Stmt::FieldAssign { field, value } => {
                w.u8(2);
                w.str(field);
                value.enc(w);
            }
            Stmt::Expr(e) => {
                w.u8(3);
                e.enc(w);
            }
            Stmt::Return(e) => {
                w.u8(4);
                e.enc(w);
            }
            Stmt::If { cond, then_body, else_body } => {
                w.u8(5);
                cond.enc(w);
                then_body.enc(w);
                else_body.enc(w);
            }
            Stmt::While { cond, body } => {
                w.u8(6);
                cond.enc(w);
                body.enc(w);
            }
        }
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => Stmt::Let { name: r.string()?, ty: Enc::dec(r)?, init: Enc::dec(r)? },
            1 => Stmt::Assign { name: r.string()?, value: Enc::dec(r)? },
            2 => Stmt::FieldAssign { field: r.string()?, value: Enc::dec(r)? },
            3 => Stmt::Expr(Enc::dec(r)?),
            4 => Stmt::Return(Enc::dec(r)?),
            5 => Stmt::If { cond: Enc::dec(r)?, then_body: Enc::dec(r)?, else_body: Enc::dec(r)? },
            6 => Stmt::While { cond: Enc::dec(r)?, body: Enc::dec(r)? },
            t => return Err(r.bad_tag("statement", t)),
        })
    }
}

/// Structs encoded field by field in declaration order.
macro_rules! struct_enc {
    ($ty:ident { $($field:ident),+ $(,)? }) => {
        impl Enc for $ty {
            fn enc(&self, w: &mut ByteWriter) {
                $(self.$field.enc(w);)+
            }
            fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
                Ok($ty { $($field: Enc::dec(r)?),+ })
            }
        }
    };
}

struct_enc!(Param { name, ty });
struct_enc!(FieldDecl { name, ty, visibility, init });
struct_enc!(MethodDecl { name, visibility, params, ret, body, is_constructor, is_static });
struct_enc!(ClassDecl { name, annotation, fields, constructors, methods });
struct_enc!(StubDef { method, is_constructor, params, ret });
struct_enc!(ProxyClassDef { class, class_id, direction, hash_field, stubs });
struct_enc!(RelayMethodDef { owner, method, kind, params, ret });
struct_enc!(ConcreteClass { class_id, decl, relays });
struct_enc!(ClassInfo { name, annotation });
struct_enc!(ImageSpec { side, class_table, concrete, proxies, entry_points, pruned_proxies, pruned_methods });

impl Enc for EntryPoint {
    fn enc(&self, w: &mut ByteWriter) {
        match self {
            EntryPoint::Main { class } => {
                w.u8(0);
                w.str(class);
            }
            EntryPoint::Relay { class, method } => {
                w.u8(1);
                w.str(class);
                w.str(method);
            }
        }
    }
    fn dec(r: &mut ByteReader) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => EntryPoint::Main { class: r.string()? },
            1 => EntryPoint::Relay { class: r.string()?, method: r.string()? },
            t => return Err(r.bad_tag("entry point", t)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitioner::compute_images;

    fn plan() -> PartitionPlan {
        compute_images(&parse_program(include_str!("../../tests/fixtures/listing1.ep")).unwrap()).unwrap()
    }

    #[test]
    fn image_round_trip() {
        let plan = plan();
        for image in [&plan.trusted, &plan.untrusted] {
            let bytes = encode_image(image);
            assert!(bytes.starts_with(IMAGE_MAGIC));
            assert_eq!(&decode_image(&bytes).unwrap(), image);
        }
    }

    #[test]
    fn corrupt_images_are_rejected() {
        let bytes = encode_image(&plan().trusted);
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert_eq!(decode_image(&bad_magic), Err(DecodeError::BadMagic));
        assert!(decode_image(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_image(&extra).is_err());
    }

    #[test]
    fn emit_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit(&plan(), a.path()).unwrap();
        emit(&plan(), b.path()).unwrap();
        for name in [TRUSTED_FILE, UNTRUSTED_FILE, INTERFACE_FILE] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
    }
}
